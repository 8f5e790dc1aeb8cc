//! The three batch commands: closed-form bounds, Monte-Carlo simulation,
//! and one-axis sweeps combining both.

use shotlimit::array_detection::optimal_gain;
use shotlimit::bounds::SensitivitySummary;
use shotlimit::homodyne::{tune_phase, HomodyneConfig};
use shotlimit::models::Illumination;
use shotlimit::montecarlo::{run_batch, SchemeConfig, TrialBatch};

use crate::config::{McSettings, RunConfig, SweepAxis};
use crate::report;

#[derive(Debug)]
pub enum CliError {
    /// Bad or inconsistent configuration; nothing was computed.
    Config(Vec<String>),
    /// The library rejected the computation.
    Numeric(shotlimit::Error),
    Io(std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 1,
        }
    }

    pub fn report(&self) {
        match self {
            CliError::Config(problems) => {
                eprintln!("configuration error:");
                for p in problems {
                    eprintln!("  - {p}");
                }
            }
            CliError::Numeric(e) => eprintln!("numeric failure: {e}"),
            CliError::Io(e) => eprintln!("io error: {e}"),
        }
    }
}

impl From<shotlimit::Error> for CliError {
    fn from(e: shotlimit::Error) -> Self {
        CliError::Numeric(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

/// Serializes the effective configuration next to the outputs.
fn echo_config(run: &RunConfig) -> Result<(), CliError> {
    let text = toml::to_string_pretty(&run.effective)
        .expect("effective config is plain data");
    let path = report::output_path(&run.prefix, "config");
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn cmd_bounds(run: &RunConfig) -> Result<(), CliError> {
    let summary = SensitivitySummary::compute(&run.model, &run.grid, &run.illumination)?;
    let line = report::bounds_line(run.model.name(), &run.illumination, &summary);
    report::write_csv(
        &report::output_path(&run.prefix, "bounds.csv"),
        report::BOUNDS_HEADER,
        &[line],
    )?;
    echo_config(run)?;
    report::print_bounds_summary(run.model.name(), &summary);
    Ok(())
}

/// One Monte-Carlo batch per configured scheme, paired with the bound the
/// estimator is judged against.
fn simulate_batches(
    run: &RunConfig,
    illumination: &Illumination,
    mc: &McSettings,
) -> Result<Vec<(TrialBatch, f64)>, CliError> {
    let summary = SensitivitySummary::compute(&run.model, &run.grid, illumination)?;
    let mut out = Vec::new();
    if run.scheme.includes_intensity() {
        let gain = optimal_gain(&run.model, &run.grid, 1.0)?;
        let scheme = SchemeConfig::Intensity { gain };
        let batch = run_batch(
            &scheme,
            &run.model,
            illumination,
            mc.true_p,
            mc.n_trials as usize,
            mc.seed,
        )?;
        out.push((batch, summary.crb_intensity));
    }
    if run.scheme.includes_field() {
        let config = HomodyneConfig::mode_matched(&run.model, &run.grid, illumination.photons())?;
        let theta = tune_phase(&config, &run.model)?;
        let scheme = SchemeConfig::Field {
            homodyne: config.with_phase(theta)?,
        };
        let batch = run_batch(
            &scheme,
            &run.model,
            illumination,
            mc.true_p,
            mc.n_trials as usize,
            mc.seed,
        )?;
        out.push((batch, summary.crb_field));
    }
    Ok(out)
}

fn require_mc(run: &RunConfig) -> Result<&McSettings, CliError> {
    run.mc
        .as_ref()
        .ok_or_else(|| CliError::Config(vec!["this command requires an [mc] section".into()]))
}

pub fn cmd_simulate(run: &RunConfig) -> Result<(), CliError> {
    let mc = require_mc(run)?;
    let batches = simulate_batches(run, &run.illumination, mc)?;
    let rows: Vec<String> = batches
        .iter()
        .map(|(batch, crb)| report::mc_line(batch, *crb))
        .collect();
    report::write_csv(
        &report::output_path(&run.prefix, "mc.csv"),
        report::MC_HEADER,
        &rows,
    )?;
    echo_config(run)?;
    for (batch, crb) in &batches {
        report::print_mc_summary(batch, *crb);
    }
    Ok(())
}

pub fn cmd_sweep(run: &RunConfig) -> Result<(), CliError> {
    let sweep = run.sweep.as_ref().ok_or_else(|| {
        CliError::Config(vec!["sweep requires a [sweep] section".into()])
    })?;
    if sweep.axis == SweepAxis::P {
        require_mc(run)?;
    }

    let mut header = format!("swept_{},{}", sweep.axis.label(), report::BOUNDS_HEADER);
    if run.mc.is_some() {
        header = format!("{header},{}", report::MC_HEADER);
    }

    let mut rows = Vec::new();
    for &value in &sweep.values {
        let illumination = match sweep.axis {
            SweepAxis::Photons => Illumination::new(
                value,
                run.illumination.sigma_p2(),
                run.illumination.sigma_q2(),
            )?,
            SweepAxis::SigmaP2 => Illumination::new(
                run.illumination.photons(),
                value,
                run.illumination.sigma_q2(),
            )?,
            SweepAxis::P => run.illumination.clone(),
        };
        let summary = SensitivitySummary::compute(&run.model, &run.grid, &illumination)?;
        let bounds = report::bounds_line(run.model.name(), &illumination, &summary);
        match &run.mc {
            None => rows.push(format!("{value},{bounds}")),
            Some(mc) => {
                let mc = McSettings {
                    true_p: if sweep.axis == SweepAxis::P { value } else { mc.true_p },
                    ..mc.clone()
                };
                for (batch, crb) in simulate_batches(run, &illumination, &mc)? {
                    let mc_cols = report::mc_line(&batch, crb);
                    rows.push(format!("{value},{bounds},{mc_cols}"));
                }
            }
        }
    }

    report::write_csv(
        &report::output_path(&run.prefix, "sweep.csv"),
        &header,
        &rows,
    )?;
    echo_config(run)?;
    println!(
        "swept {} over {} values; {} rows written",
        sweep.axis.label(),
        sweep.values.len(),
        rows.len()
    );
    Ok(())
}
