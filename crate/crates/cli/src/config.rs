//! Run configuration: a small TOML schema mapped onto the library types,
//! with every field checked up front so a bad file produces one
//! consolidated report instead of a trail of partial outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shotlimit::models::{ImageModel, Illumination};
use shotlimit::transverse::{Dimension, TransverseGrid};

/// Parsed but unvalidated file contents. Every field is optional so that
/// validation, not deserialization, reports what is missing.
#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub model: Option<ModelSection>,
    pub grid: Option<GridSection>,
    pub illumination: Option<IlluminationSection>,
    pub scheme: Option<SchemeSection>,
    pub mc: Option<McSection>,
    pub output: Option<OutputSection>,
    pub sweep: Option<SweepSection>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: Option<String>,
    pub waist: Option<f64>,
    pub kappa: Option<f64>,
    pub p_scale: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub dimension: Option<u32>,
    pub extent: Option<f64>,
    pub points: Option<u32>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationSection {
    pub photons: Option<f64>,
    pub sigma_p2: Option<f64>,
    pub sigma_q2: Option<f64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct McSection {
    pub n_trials: Option<u64>,
    pub true_p: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub prefix: Option<String>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<String>,
    pub values: Option<Vec<f64>>,
}

/// Which detection schemes a run covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeChoice {
    Intensity,
    Field,
    Both,
}

impl SchemeChoice {
    pub fn includes_intensity(self) -> bool {
        matches!(self, SchemeChoice::Intensity | SchemeChoice::Both)
    }

    pub fn includes_field(self) -> bool {
        matches!(self, SchemeChoice::Field | SchemeChoice::Both)
    }

    fn label(self) -> &'static str {
        match self {
            SchemeChoice::Intensity => "intensity",
            SchemeChoice::Field => "field",
            SchemeChoice::Both => "both",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    Photons,
    SigmaP2,
    P,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Photons => "N",
            SweepAxis::SigmaP2 => "sigma_P2",
            SweepAxis::P => "p",
        }
    }
}

#[derive(Clone, Debug)]
pub struct McSettings {
    pub n_trials: u64,
    pub true_p: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SweepSettings {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

/// Fully validated run: library objects plus the harness settings.
#[derive(Debug)]
pub struct RunConfig {
    pub model: ImageModel,
    pub grid: TransverseGrid,
    pub illumination: Illumination,
    pub scheme: SchemeChoice,
    pub mc: Option<McSettings>,
    pub sweep: Option<SweepSettings>,
    pub prefix: PathBuf,
    /// The input with every default and override filled in; echoed next to
    /// the outputs so a run can be reproduced from its artifacts alone.
    pub effective: RawConfig,
}

pub const DEFAULT_WAIST: f64 = 1.0;
pub const DEFAULT_KAPPA: f64 = 1.0;
pub const DEFAULT_SIGMA2: f64 = 1.0;
pub const DEFAULT_TRIALS: u64 = 100_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_PREFIX: &str = "run";
const DEFAULT_EXTENT_WAISTS: f64 = 6.0;
const DEFAULT_POINTS_1D: u32 = 256;
const DEFAULT_POINTS_2D: u32 = 128;

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<String>,
}

pub fn load(path: &Path, overrides: &Overrides) -> Result<RunConfig, Vec<String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
    let raw: RawConfig =
        toml::from_str(&text).map_err(|e| vec![format!("config parse error: {e}")])?;
    validate(raw, overrides)
}

/// Checks every section, collecting all problems before giving up.
pub fn validate(raw: RawConfig, overrides: &Overrides) -> Result<RunConfig, Vec<String>> {
    let mut errors = Vec::new();

    let model_section = raw.model.clone().unwrap_or_default();
    let waist = model_section.waist.unwrap_or(DEFAULT_WAIST);
    let kappa = model_section.kappa.unwrap_or(DEFAULT_KAPPA);
    let kind = model_section.kind.clone();
    let model = match kind.as_deref() {
        Some("displaced_gaussian") => ImageModel::displaced_gaussian(waist),
        Some("waist_scaled_gaussian") => ImageModel::waist_scaled_gaussian(waist),
        Some("phase_tilt") => ImageModel::phase_tilt(waist, kappa),
        Some(other) => {
            errors.push(format!(
                "model.kind `{other}` is not one of displaced_gaussian, \
                 waist_scaled_gaussian, phase_tilt"
            ));
            ImageModel::displaced_gaussian(1.0)
        }
        None => {
            errors.push("model.kind is required".into());
            ImageModel::displaced_gaussian(1.0)
        }
    };
    let model = model.and_then(|m| match model_section.p_scale {
        Some(s) => m.with_p_scale(s),
        None => Ok(m),
    });
    let model = match model {
        Ok(m) => Some(m),
        Err(e) => {
            errors.push(format!("model: {e}"));
            None
        }
    };

    let grid_section = raw.grid.clone().unwrap_or_default();
    let dimension = match grid_section.dimension.unwrap_or(1) {
        1 => Some(Dimension::One),
        2 => Some(Dimension::Two),
        d => {
            errors.push(format!("grid.dimension must be 1 or 2, got {d}"));
            None
        }
    };
    let extent = grid_section.extent.unwrap_or(DEFAULT_EXTENT_WAISTS * waist);
    let points = grid_section.points.unwrap_or(match dimension {
        Some(Dimension::Two) => DEFAULT_POINTS_2D,
        _ => DEFAULT_POINTS_1D,
    });
    let grid = dimension.and_then(|dim| match TransverseGrid::new(dim, extent, points) {
        Ok(g) => Some(g),
        Err(e) => {
            errors.push(format!("grid: {e}"));
            None
        }
    });

    let illumination_section = raw.illumination.clone().unwrap_or_default();
    let photons = illumination_section.photons;
    if photons.is_none() {
        errors.push("illumination.photons is required".into());
    }
    let sigma_p2 = illumination_section.sigma_p2.unwrap_or(DEFAULT_SIGMA2);
    let mut sigma_ok = true;
    if !(sigma_p2 > 0.0) || !sigma_p2.is_finite() {
        errors.push("illumination.sigma_p2 must be positive and finite".into());
        sigma_ok = false;
    }
    let sigma_q2 = illumination_section.sigma_q2.unwrap_or_else(|| {
        if sigma_ok {
            DEFAULT_SIGMA2.max(1.0 / sigma_p2)
        } else {
            DEFAULT_SIGMA2
        }
    });
    if !(sigma_q2 > 0.0) || !sigma_q2.is_finite() {
        errors.push("illumination.sigma_q2 must be positive and finite".into());
        sigma_ok = false;
    }
    let photons = photons.unwrap_or(f64::NAN);
    let illumination = if photons.is_nan() || !sigma_ok {
        None
    } else {
        match Illumination::new(photons, sigma_p2, sigma_q2) {
            Ok(i) => Some(i),
            Err(e) => {
                errors.push(format!("illumination: {e}"));
                None
            }
        }
    };

    let scheme_kind = raw
        .scheme
        .clone()
        .unwrap_or_default()
        .kind
        .unwrap_or_else(|| "both".into());
    let scheme = match scheme_kind.as_str() {
        "intensity" => Some(SchemeChoice::Intensity),
        "field" => Some(SchemeChoice::Field),
        "both" => Some(SchemeChoice::Both),
        other => {
            errors.push(format!(
                "scheme.kind `{other}` is not one of intensity, field, both"
            ));
            None
        }
    };

    let mc = raw.mc.clone().map(|section| {
        let n_trials = section.n_trials.unwrap_or(DEFAULT_TRIALS);
        if n_trials < shotlimit::montecarlo::MIN_TRIALS as u64 {
            errors.push(format!(
                "mc.n_trials must be at least {}, got {n_trials}",
                shotlimit::montecarlo::MIN_TRIALS
            ));
        }
        let true_p = section.true_p.unwrap_or(0.0);
        if !true_p.is_finite() {
            errors.push("mc.true_p must be finite".into());
        }
        McSettings {
            n_trials,
            true_p,
            seed: overrides.seed.or(section.seed).unwrap_or(DEFAULT_SEED),
        }
    });

    let sweep = raw.sweep.clone().map(|section| {
        let axis = match section.axis.as_deref() {
            Some("N") => Some(SweepAxis::Photons),
            Some("sigma_P2") => Some(SweepAxis::SigmaP2),
            Some("p") => Some(SweepAxis::P),
            Some(other) => {
                errors.push(format!("sweep.axis `{other}` is not one of N, sigma_P2, p"));
                None
            }
            None => {
                errors.push("sweep.axis is required when [sweep] is present".into());
                None
            }
        };
        let values = section.values.unwrap_or_default();
        if values.is_empty() {
            errors.push("sweep.values must list at least one value".into());
        }
        if let Some(axis) = axis {
            for &v in &values {
                match axis {
                    SweepAxis::Photons => {
                        if !(v > 0.0) || !v.is_finite() {
                            errors.push(format!("sweep value {v}: N must be positive and finite"));
                        }
                    }
                    SweepAxis::SigmaP2 => {
                        if !(v > 0.0) || !v.is_finite() {
                            errors.push(format!(
                                "sweep value {v}: sigma_P2 must be positive and finite"
                            ));
                        } else if let Err(e) = Illumination::new(1.0, v, sigma_q2) {
                            errors.push(format!("sweep value {v}: {e}"));
                        }
                    }
                    SweepAxis::P => {
                        if !v.is_finite() {
                            errors.push(format!("sweep value {v}: p must be finite"));
                        }
                    }
                }
            }
            if axis == SweepAxis::P && raw.mc.is_none() {
                errors.push("sweep over p requires an [mc] section".into());
            }
        }
        SweepSettings {
            axis: axis.unwrap_or(SweepAxis::Photons),
            values,
        }
    });

    let prefix = overrides
        .out
        .clone()
        .or_else(|| raw.output.clone().unwrap_or_default().prefix)
        .unwrap_or_else(|| DEFAULT_PREFIX.into());

    if !errors.is_empty() {
        return Err(errors);
    }
    let (model, grid, illumination, scheme) =
        match (model, grid, illumination, scheme) {
            (Some(m), Some(g), Some(i), Some(s)) => (m, g, i, s),
            _ => unreachable!("missing pieces produce errors above"),
        };

    let effective = RawConfig {
        model: Some(ModelSection {
            kind,
            waist: Some(waist),
            kappa: Some(kappa),
            p_scale: Some(model.p_scale()),
        }),
        grid: Some(GridSection {
            dimension: Some(grid.dimension().as_u32()),
            extent: Some(grid.extent()),
            points: Some(grid.points_per_axis()),
        }),
        illumination: Some(IlluminationSection {
            photons: Some(photons),
            sigma_p2: Some(sigma_p2),
            sigma_q2: Some(sigma_q2),
        }),
        scheme: Some(SchemeSection {
            kind: Some(scheme.label().into()),
        }),
        mc: mc.as_ref().map(|m| McSection {
            n_trials: Some(m.n_trials),
            true_p: Some(m.true_p),
            seed: Some(m.seed),
        }),
        output: Some(OutputSection {
            prefix: Some(prefix.clone()),
        }),
        sweep: sweep.as_ref().map(|s| SweepSection {
            axis: Some(s.axis.label().into()),
            values: Some(s.values.clone()),
        }),
    };

    Ok(RunConfig {
        model,
        grid,
        illumination,
        scheme,
        mc,
        sweep,
        prefix: PathBuf::from(prefix),
        effective,
    })
}
