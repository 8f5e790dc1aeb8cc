//! Parametrized image models u₀(r, p) and illumination statistics.
//!
//! An [`ImageModel`] describes how a normalized transverse mode depends on
//! the scalar parameter p being estimated. The total photon number is fixed
//! by the illumination, not by p, so every evaluator must stay normalized
//! over its parameter range; all sensitivity formulas downstream rest on
//! that invariant through Re⟨u₀, ∂u₀/∂p⟩ = 0.
//!
//! Three closed-form families cover the canonical encodings:
//!
//! * `displaced_gaussian(w)`: beam displacement, u₀(x, p) ∝ e^{−(x−p)²/w²}.
//! * `waist_scaled_gaussian(w)`: breathing waist w(1+p).
//! * `phase_tilt(w, κ)`: pure phase encoding u₀(x)·e^{iκpx}, invisible to
//!   photon counting.
//!
//! Arbitrary families enter through [`ImageModel::custom`], which
//! normalizes the supplied evaluator numerically and differentiates it by
//! verified central finite differences.
//!
//! [`Illumination`] bundles the photon budget N with the quadrature noise
//! variances (σ_P², σ_Q²) of the relevant input mode, in shot-noise units
//! where vacuum and coherent states sit at 1.

use std::sync::Arc;

use num_complex::Complex64;

use crate::transverse::{Dimension, Field, TransverseGrid};
use crate::{Error, Result};

/// Finite-difference step is this fraction of the model's p_scale.
pub const FD_STEP_FACTOR: f64 = 1e-4;

/// Relative L² disagreement between the 10⁻⁴·p_scale and 10⁻⁵·p_scale
/// difference quotients above which a derivative is rejected.
pub const FD_CHECK_TOL: f64 = 1e-3;

/// Cells where |u₀| falls below this fraction of its peak use the one-sided
/// modulus-derivative rule instead of the quotient Re(u₀*·∂u₀/∂p)/|u₀|.
pub const MODULUS_FLOOR_FACTOR: f64 = 1e-12;

/// Evaluators may drift from unit norm by at most this much inside ±p_scale
/// on grids fine enough to resolve the mode (quadrature error below 10⁻⁸).
pub const MODE_NORM_TOL: f64 = 1e-6;

/// Raw quadrature norm² further than this from 1 means the evaluator is
/// wrongly normalized or the grid cannot represent the mode at all; honest
/// discretization error on supported grids sits orders of magnitude lower.
pub const MODE_NORM_REJECT_TOL: f64 = 0.05;

/// Default p_scale for the built-in families, as a fraction of the waist.
pub const DEFAULT_P_SCALE_WAIST_FRACTION: f64 = 0.1;

const QUARTER_ROOT_2_OVER_PI: f64 = 0.893_243_841_738_002_4;

type Evaluator = Arc<dyn Fn(&TransverseGrid, f64) -> Result<Vec<Complex64>> + Send + Sync>;
type DerivativeFn = Arc<dyn Fn(&TransverseGrid) -> Vec<Complex64> + Send + Sync>;

/// How ∂u₀/∂p at p = 0 is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Closed-form derivative supplied with the model.
    Analytic,
    /// Central differences with step 10⁻⁴·p_scale, cross-checked at a ten
    /// times smaller step.
    FiniteDifference,
}

/// A mode field together with evaluation metadata.
#[derive(Clone, Debug)]
pub struct ModeSample {
    pub field: Field,
    /// Set when |p| exceeded the model's p_scale; the mode is still valid
    /// but first-order formulas built from derivatives at p = 0 may not be.
    pub beyond_scale: bool,
    /// Quadrature norm² of the evaluator output before renormalization;
    /// deviation from 1 mixes family drift with grid discretization error.
    pub raw_norm_sq: f64,
}

/// Normalized parametrized mode family u₀(r, p).
#[derive(Clone)]
pub struct ImageModel {
    name: String,
    /// Characteristic parameter range; sets finite-difference steps and the
    /// soft validity warning of [`ImageModel::mode_at`].
    p_scale: f64,
    derivative_mode: DerivativeMode,
    evaluator: Evaluator,
    analytic_derivative: Option<DerivativeFn>,
}

impl std::fmt::Debug for ImageModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageModel")
            .field("name", &self.name)
            .field("p_scale", &self.p_scale)
            .field("derivative_mode", &self.derivative_mode)
            .finish()
    }
}

fn check_waist(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel("waist must be positive and finite"))
    }
}

impl ImageModel {
    /// Ground Gaussian displaced along x by p: u₀(x, p) ∝ e^{−(x−p)²/w²}.
    /// In two dimensions the y profile is the undisplaced ground Gaussian.
    pub fn displaced_gaussian(w: f64) -> Result<Self> {
        check_waist(w)?;
        let amp_1d = QUARTER_ROOT_2_OVER_PI / w.sqrt();
        let evaluator: Evaluator = Arc::new(move |grid, p| {
            let values = match grid.dimension() {
                Dimension::One => sample(grid, |x, _| {
                    Complex64::new(amp_1d * (-(x - p) * (x - p) / (w * w)).exp(), 0.0)
                }),
                Dimension::Two => sample(grid, |x, y| {
                    let amp = amp_1d * amp_1d;
                    Complex64::new(amp * (-((x - p) * (x - p) + y * y) / (w * w)).exp(), 0.0)
                }),
            };
            Ok(values)
        });
        let eval_for_derivative = evaluator.clone();
        let derivative: DerivativeFn = Arc::new(move |grid| {
            let u0 = (eval_for_derivative)(grid, 0.0).expect("closed-form evaluator");
            u0.iter()
                .enumerate()
                .map(|(k, v)| {
                    let (x, _) = grid.position(k);
                    v * (2.0 * x / (w * w))
                })
                .collect()
        });
        Ok(Self {
            name: format!("displaced_gaussian(w={w})"),
            p_scale: DEFAULT_P_SCALE_WAIST_FRACTION * w,
            derivative_mode: DerivativeMode::Analytic,
            evaluator,
            analytic_derivative: Some(derivative),
        })
    }

    /// Gaussian whose waist breathes as w(1+p); p is dimensionless.
    /// In two dimensions the scaling is isotropic.
    pub fn waist_scaled_gaussian(w: f64) -> Result<Self> {
        check_waist(w)?;
        let evaluator: Evaluator = Arc::new(move |grid, p| {
            let s = 1.0 + p;
            if s <= 0.0 {
                return Err(Error::ModelEvaluation(format!(
                    "waist factor 1 + p = {s} is not positive"
                )));
            }
            let ws = w * s;
            let amp_1d = QUARTER_ROOT_2_OVER_PI / ws.sqrt();
            let values = match grid.dimension() {
                Dimension::One => sample(grid, |x, _| {
                    Complex64::new(amp_1d * (-x * x / (ws * ws)).exp(), 0.0)
                }),
                Dimension::Two => sample(grid, |x, y| {
                    let amp = amp_1d * amp_1d;
                    Complex64::new(amp * (-(x * x + y * y) / (ws * ws)).exp(), 0.0)
                }),
            };
            Ok(values)
        });
        let eval_for_derivative = evaluator.clone();
        let derivative: DerivativeFn = Arc::new(move |grid| {
            let u0 = (eval_for_derivative)(grid, 0.0).expect("closed-form evaluator");
            // ∂p at p=0: u₀·(2x²/w² − 1/2) per scaled axis.
            u0.iter()
                .enumerate()
                .map(|(k, v)| {
                    let (x, y) = grid.position(k);
                    let shape = match grid.dimension() {
                        Dimension::One => 2.0 * x * x / (w * w) - 0.5,
                        Dimension::Two => 2.0 * (x * x + y * y) / (w * w) - 1.0,
                    };
                    v * shape
                })
                .collect()
        });
        Ok(Self {
            name: format!("waist_scaled_gaussian(w={w})"),
            p_scale: DEFAULT_P_SCALE_WAIST_FRACTION * w,
            derivative_mode: DerivativeMode::Analytic,
            evaluator,
            analytic_derivative: Some(derivative),
        })
    }

    /// Pure phase encoding u₀(x)·e^{iκpx}: the intensity pattern carries no
    /// trace of p, only the field does.
    pub fn phase_tilt(w: f64, kappa: f64) -> Result<Self> {
        check_waist(w)?;
        if !kappa.is_finite() || kappa == 0.0 {
            return Err(Error::InvalidModel("kappa must be nonzero and finite"));
        }
        let amp_1d = QUARTER_ROOT_2_OVER_PI / w.sqrt();
        let evaluator: Evaluator = Arc::new(move |grid, p| {
            let values = match grid.dimension() {
                Dimension::One => sample(grid, |x, _| {
                    let mag = amp_1d * (-x * x / (w * w)).exp();
                    Complex64::from_polar(mag, kappa * p * x)
                }),
                Dimension::Two => sample(grid, |x, y| {
                    let mag = amp_1d * amp_1d * (-(x * x + y * y) / (w * w)).exp();
                    Complex64::from_polar(mag, kappa * p * x)
                }),
            };
            Ok(values)
        });
        let eval_for_derivative = evaluator.clone();
        let derivative: DerivativeFn = Arc::new(move |grid| {
            let u0 = (eval_for_derivative)(grid, 0.0).expect("closed-form evaluator");
            u0.iter()
                .enumerate()
                .map(|(k, v)| {
                    let (x, _) = grid.position(k);
                    Complex64::new(0.0, kappa * x) * v
                })
                .collect()
        });
        Ok(Self {
            name: format!("phase_tilt(w={w};kappa={kappa})"),
            p_scale: DEFAULT_P_SCALE_WAIST_FRACTION * w,
            derivative_mode: DerivativeMode::Analytic,
            evaluator,
            analytic_derivative: Some(derivative),
        })
    }

    /// Caller-supplied family. The evaluator's output is normalized
    /// numerically at every p, so the caller only has to provide a shape;
    /// derivatives are taken by verified finite differences.
    pub fn custom(
        name: impl Into<String>,
        p_scale: f64,
        evaluator: impl Fn(&TransverseGrid, f64) -> Vec<Complex64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(p_scale > 0.0) || !p_scale.is_finite() {
            return Err(Error::InvalidModel("p_scale must be positive and finite"));
        }
        let wrapped: Evaluator = Arc::new(move |grid, p| {
            let raw = evaluator(grid, p);
            let field = Field::new(*grid, raw)?;
            let normalized = field.normalize().map_err(|_| {
                Error::ModelEvaluation(format!("evaluator returned a null field at p = {p}"))
            })?;
            Ok(normalized.values().to_vec())
        });
        Ok(Self {
            name: name.into(),
            p_scale,
            derivative_mode: DerivativeMode::FiniteDifference,
            evaluator: wrapped,
            analytic_derivative: None,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn p_scale(&self) -> f64 {
        self.p_scale
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.derivative_mode
    }

    /// Overrides the characteristic parameter range.
    pub fn with_p_scale(mut self, p_scale: f64) -> Result<Self> {
        if !(p_scale > 0.0) || !p_scale.is_finite() {
            return Err(Error::InvalidModel("p_scale must be positive and finite"));
        }
        self.p_scale = p_scale;
        Ok(self)
    }

    /// Switches the derivative route. Requesting the analytic route on a
    /// model that carries no closed-form derivative is an error.
    pub fn with_derivative_mode(mut self, mode: DerivativeMode) -> Result<Self> {
        if mode == DerivativeMode::Analytic && self.analytic_derivative.is_none() {
            return Err(Error::InvalidModel("model has no analytic derivative"));
        }
        self.derivative_mode = mode;
        Ok(self)
    }

    /// Evaluates u₀(·, p) on a grid. |p| beyond p_scale is allowed but
    /// flagged in the returned metadata. The result is renormalized on the
    /// grid, so its discrete norm² is 1 to rounding on any resolution; the
    /// raw quadrature norm² is reported alongside for drift diagnostics.
    pub fn mode_at(&self, grid: &TransverseGrid, p: f64) -> Result<ModeSample> {
        if !p.is_finite() {
            return Err(Error::ModelEvaluation("p must be finite".into()));
        }
        let values = (self.evaluator)(grid, p)?;
        let field = Field::new(*grid, values)?;
        if field
            .values()
            .iter()
            .any(|v| !v.re.is_finite() || !v.im.is_finite())
        {
            return Err(Error::ModelEvaluation(format!(
                "non-finite mode value at p = {p}"
            )));
        }
        let raw_norm_sq = field.norm_sq();
        if (raw_norm_sq - 1.0).abs() > MODE_NORM_REJECT_TOL {
            return Err(Error::ModelEvaluation(format!(
                "mode norm² drifted to {raw_norm_sq} at p = {p}"
            )));
        }
        let field = field.normalize()?;
        Ok(ModeSample {
            field,
            beyond_scale: p.abs() > self.p_scale,
            raw_norm_sq,
        })
    }

    /// Convenience accessor that drops the validity flag.
    pub fn mode_field(&self, grid: &TransverseGrid, p: f64) -> Result<Field> {
        Ok(self.mode_at(grid, p)?.field)
    }

    /// ∂u₀/∂p at p = 0 on the given grid.
    pub fn mode_derivative(&self, grid: &TransverseGrid) -> Result<Field> {
        match (self.derivative_mode, &self.analytic_derivative) {
            (DerivativeMode::Analytic, Some(d)) => Field::new(*grid, d(grid)),
            _ => self.fd_mode_derivative(grid),
        }
    }

    fn central_difference(&self, grid: &TransverseGrid, h: f64) -> Result<Field> {
        let up = self.mode_field(grid, h)?;
        let um = self.mode_field(grid, -h)?;
        let inv = 0.5 / h;
        let values = up
            .values()
            .iter()
            .zip(um.values())
            .map(|(a, b)| (a - b) * inv)
            .collect();
        Field::new(*grid, values)
    }

    fn fd_mode_derivative(&self, grid: &TransverseGrid) -> Result<Field> {
        let h = FD_STEP_FACTOR * self.p_scale;
        let coarse = self.central_difference(grid, h)?;
        let fine = self.central_difference(grid, h / 10.0)?;
        let scale = coarse.norm_sq().sqrt().max(fine.norm_sq().sqrt());
        if scale == 0.0 {
            // Both quotients vanish identically: the parameter is flat here.
            return Ok(coarse);
        }
        let disagreement = coarse.distance(&fine)? / scale;
        if disagreement > FD_CHECK_TOL {
            return Err(Error::DerivativeUnreliable(disagreement));
        }
        Ok(coarse)
    }

    /// ∂|u₀|/∂p at p = 0, the real field driving intensity detection.
    ///
    /// Away from the beam's dark fringes this is Re(u₀*·∂u₀/∂p)/|u₀|.
    /// Below the modulus floor the quotient is replaced by |∂u₀/∂p| signed
    /// by the outward difference of the modulus, the one-sided limit at a
    /// zero of |u₀|.
    pub fn modulus_derivative(&self, grid: &TransverseGrid) -> Result<Field> {
        let u0 = self.mode_field(grid, 0.0)?;
        let d = self.mode_derivative(grid)?;
        let floor = MODULUS_FLOOR_FACTOR * u0.max_abs();
        let h = FD_STEP_FACTOR * self.p_scale;
        let up = self.mode_field(grid, h)?;
        let um = self.mode_field(grid, -h)?;
        let values = (0..u0.len())
            .map(|k| {
                let m = u0.values()[k].norm();
                let re = if m >= floor {
                    (u0.values()[k].conj() * d.values()[k]).re / m
                } else {
                    let outward = up.values()[k].norm() - um.values()[k].norm();
                    let sign = if outward > 0.0 {
                        1.0
                    } else if outward < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    sign * d.values()[k].norm()
                };
                Complex64::new(re, 0.0)
            })
            .collect();
        Field::new(*grid, values)
    }
}

fn sample(grid: &TransverseGrid, f: impl Fn(f64, f64) -> Complex64) -> Vec<Complex64> {
    (0..grid.num_cells())
        .map(|k| {
            let (x, y) = grid.position(k);
            f(x, y)
        })
        .collect()
}

/// Photon budget and quadrature noise of the illumination.
///
/// σ_P² and σ_Q² are the noise variances of the relevant input mode in
/// shot-noise units: coherent light has (1, 1), amplitude-squeezed light
/// has σ_P² < 1 at the cost of σ_Q² ≥ 1/σ_P².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Illumination {
    photons: f64,
    sigma_p2: f64,
    sigma_q2: f64,
}

impl Illumination {
    pub fn new(photons: f64, sigma_p2: f64, sigma_q2: f64) -> Result<Self> {
        if !(photons > 0.0) || !photons.is_finite() {
            return Err(Error::InvalidIllumination(
                "photon number must be positive and finite",
            ));
        }
        if !(sigma_p2 > 0.0) || !sigma_p2.is_finite() || !(sigma_q2 > 0.0) || !sigma_q2.is_finite()
        {
            return Err(Error::InvalidIllumination(
                "quadrature variances must be positive and finite",
            ));
        }
        // Heisenberg pair: σ_P·σ_Q ≥ 1, with a 10⁻¹² slack for rounding in
        // caller-side reciprocals.
        if sigma_p2 * sigma_q2 < 1.0 - 1e-12 {
            return Err(Error::InvalidIllumination(
                "sigma_P * sigma_Q must be at least 1",
            ));
        }
        Ok(Self {
            photons,
            sigma_p2,
            sigma_q2,
        })
    }

    /// Coherent illumination: both quadratures at shot noise.
    pub fn coherent(photons: f64) -> Result<Self> {
        Self::new(photons, 1.0, 1.0)
    }

    /// Minimum-uncertainty squeezed illumination with the given σ_P².
    pub fn squeezed(photons: f64, sigma_p2: f64) -> Result<Self> {
        if !(sigma_p2 > 0.0) || !sigma_p2.is_finite() {
            return Err(Error::InvalidIllumination(
                "quadrature variances must be positive and finite",
            ));
        }
        Self::new(photons, sigma_p2, 1.0 / sigma_p2)
    }

    /// Mean photon number N per acquisition.
    pub fn photons(&self) -> f64 {
        self.photons
    }

    /// Amplitude-quadrature noise variance σ_P² (shot-noise units).
    pub fn sigma_p2(&self) -> f64 {
        self.sigma_p2
    }

    /// Phase-quadrature noise variance σ_Q² (shot-noise units).
    pub fn sigma_q2(&self) -> f64 {
        self.sigma_q2
    }

    pub fn sigma_p(&self) -> f64 {
        self.sigma_p2.sqrt()
    }
}
