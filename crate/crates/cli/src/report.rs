//! CSV rows and the stdout summary. Numbers are written with Rust's
//! shortest round-trip formatting, so files are byte-stable for identical
//! inputs and parse back to the exact same doubles; unbounded limits
//! appear as the literal `inf`.

use std::io::Write;
use std::path::{Path, PathBuf};

use shotlimit::bounds::SensitivitySummary;
use shotlimit::models::Illumination;
use shotlimit::montecarlo::TrialBatch;

pub const BOUNDS_HEADER: &str =
    "model,N,sigma_P2,sigma_Q2,a,b,fisher_poisson,fisher_gauss,crb_intensity,crb_field";
pub const MC_HEADER: &str =
    "scheme,noise_kind,n_trials,seed,true_p,mean_estimate,std_estimate,crb,efficiency_ratio";

fn num(x: f64) -> String {
    format!("{x}")
}

pub fn bounds_line(
    model_name: &str,
    illumination: &Illumination,
    summary: &SensitivitySummary,
) -> String {
    [
        model_name.to_string(),
        num(illumination.photons()),
        num(illumination.sigma_p2()),
        num(illumination.sigma_q2()),
        num(summary.a),
        num(summary.b),
        num(summary.fisher_poisson),
        num(summary.fisher_gauss),
        num(summary.crb_intensity),
        num(summary.crb_field),
    ]
    .join(",")
}

pub fn mc_line(batch: &TrialBatch, crb: f64) -> String {
    [
        batch.scheme.label().to_string(),
        batch.noise.label().to_string(),
        batch.n_trials.to_string(),
        batch.seed.to_string(),
        num(batch.true_p),
        num(batch.mean_estimate),
        num(batch.std_estimate),
        num(crb),
        num(batch.std_estimate / crb),
    ]
    .join(",")
}

/// Writes header plus rows, one line each, trailing newline included.
pub fn write_csv(path: &Path, header: &str, rows: &[String]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "{header}")?;
    for row in rows {
        writeln!(file, "{row}")?;
    }
    Ok(())
}

/// `<prefix>_<suffix>`: output files share the configured prefix.
pub fn output_path(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().unwrap_or_default().to_os_string();
    name.push("_");
    name.push(suffix);
    prefix.with_file_name(name)
}

pub fn print_bounds_summary(model_name: &str, summary: &SensitivitySummary) {
    println!("model            {model_name}");
    println!("a                {}", num(summary.a));
    println!("b                {}", num(summary.b));
    println!("fisher_poisson   {}", num(summary.fisher_poisson));
    println!("fisher_gauss     {}", num(summary.fisher_gauss));
    println!("crb_intensity    {}", num(summary.crb_intensity));
    println!("crb_field        {}", num(summary.crb_field));
}

pub fn print_mc_summary(batch: &TrialBatch, crb: f64) {
    println!(
        "{:<10} {:<22} mean {:>13.6e}  std {:>13.6e}  crb {:>13.6e}  ratio {:.4}",
        batch.scheme.label(),
        batch.noise.label(),
        batch.mean_estimate,
        batch.std_estimate,
        crb,
        batch.std_estimate / crb,
    );
}
