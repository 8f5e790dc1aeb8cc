//! Gain-weighted intensity detection with a photodetector array.
//!
//! Each pixel k of an ideal array sees n̄_k = N|u₀(r_k, p)|²·dA mean photons
//! and contributes g(r_k)·n_k to a single summed signal. The gains are
//! chosen balanced, S̄(0) = 0, so the signal is a pure difference
//! measurement. The best gain follows the intensity noise mode,
//! g_opt = β·u_I/|u₀|, and reaches
//!
//! SNR = 4N·p²/a²,  p_min = a·σ_P/(2√N),
//!
//! the photon-counting Cramér-Rao limit. Any other balanced gain does
//! strictly worse (Cauchy-Schwarz). With bimodal squeezed illumination the
//! noise of the optimal scheme drops to N·σ_P²·β² because u_I is the only
//! mode the measurement is sensitive to.

use crate::bounds::{compute_a, noise_mode, DERIVATIVE_NORM_FLOOR};
use crate::models::ImageModel;
use crate::transverse::{pairwise_sum_by, TransverseGrid};
use crate::{Error, Result};

/// Cells whose intensity share |u₀|²·dA falls below this fraction of the
/// brightest cell get gain exactly 0 in the optimal construction; the ideal
/// gain diverges there while carrying vanishing signal and noise.
pub const GAIN_CLAMP_FRACTION: f64 = 1e-20;

/// |∫g|u₀|²| below this counts as balanced (per photon of illumination).
pub const BALANCE_TOL: f64 = 1e-9;

/// Squeezed noise is defined only at the optimal gain; weighted distance to
/// it beyond this fraction of β is a mismatch.
pub const NOISE_MODE_MATCH_TOL: f64 = 1e-6;

/// A real gain value per grid cell, plus the overall scale β it was built
/// with. β cancels in every SNR.
#[derive(Clone, Debug)]
pub struct GainDistribution {
    grid: TransverseGrid,
    gains: Vec<f64>,
    beta: f64,
}

impl GainDistribution {
    /// Wraps explicit per-cell gains. `beta` records the intended overall
    /// scale; it only matters for the squeezed noise formula.
    pub fn new(grid: TransverseGrid, gains: Vec<f64>, beta: f64) -> Result<Self> {
        if gains.len() != grid.num_cells() {
            return Err(Error::IncompatibleGrids);
        }
        if !beta.is_finite() || beta == 0.0 {
            return Err(Error::InvalidModel("beta must be finite and nonzero"));
        }
        if !gains.iter().all(|g| g.is_finite()) {
            return Err(Error::InvalidModel("gains must be finite"));
        }
        if gains.iter().all(|&g| g == 0.0) {
            return Err(Error::InvalidModel("at least one gain must be nonzero"));
        }
        Ok(Self { grid, gains, beta })
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// ∫g|u₀(·,0)|², the mean signal per photon at p = 0.
    fn offset(&self, model: &ImageModel) -> Result<f64> {
        let u0 = model.mode_field(&self.grid, 0.0)?;
        let da = self.grid.cell_measure();
        Ok(pairwise_sum_by(self.gains.len(), |k| {
            self.gains[k] * u0.values()[k].norm_sqr()
        }) * da)
    }

    /// True when S̄(0) vanishes to within [`BALANCE_TOL`] per photon.
    pub fn is_balanced_for(&self, model: &ImageModel) -> Result<bool> {
        Ok(self.offset(model)?.abs() <= BALANCE_TOL)
    }

    /// Re-centers the gains so that S̄(0) = 0 exactly on this grid.
    pub fn balanced_for(&self, model: &ImageModel) -> Result<Self> {
        let c = self.offset(model)?;
        let gains = self.gains.iter().map(|g| g - c).collect();
        Self::new(self.grid, gains, self.beta)
    }
}

/// Detection figures of merit shared by the array and homodyne schemes.
///
/// `mean_signal`, `snr`, and `p_min` use the first-order (linear in p)
/// signal model, so snr = mean_signal²/noise_variance and snr(p_min) = 1
/// hold as identities; the standalone signal operations stay exact in p.
#[derive(Clone, Copy, Debug)]
pub struct DetectionReport {
    /// First-order mean signal at the requested p (photon counts).
    pub mean_signal: f64,
    /// Noise variance of the signal (photon counts squared).
    pub noise_variance: f64,
    /// mean_signal²/noise_variance.
    pub snr: f64,
    /// The p at which snr reaches 1; infinite when the configuration has no
    /// first-order response.
    pub p_min: f64,
}

/// S̄(p) = Σ g_k·N|u₀(r_k, p)|²·dA, exact in p.
pub fn mean_signal(
    gain: &GainDistribution,
    model: &ImageModel,
    photons: f64,
    p: f64,
) -> Result<f64> {
    let u = model.mode_field(gain.grid(), p)?;
    let da = gain.grid().cell_measure();
    Ok(photons
        * pairwise_sum_by(gain.gains().len(), |k| {
            gain.gains()[k] * u.values()[k].norm_sqr()
        })
        * da)
}

/// Variance of the summed signal.
///
/// Coherent illumination: shot noise of every pixel, ΔS² = N·Σg²|u₀|²·dA.
/// Squeezed noise mode (flag set): ΔS² = N·σ_P²·β², valid only for the
/// optimal gain, where u_I is the single mode the measurement reads.
pub fn noise_variance(
    gain: &GainDistribution,
    model: &ImageModel,
    photons: f64,
    sigma_p2: f64,
    squeezed_noise_mode: bool,
) -> Result<f64> {
    if squeezed_noise_mode {
        require_noise_mode_gain(gain, model)?;
        return Ok(photons * sigma_p2 * gain.beta() * gain.beta());
    }
    let u0 = model.mode_field(gain.grid(), 0.0)?;
    let da = gain.grid().cell_measure();
    Ok(photons
        * pairwise_sum_by(gain.gains().len(), |k| {
            let g = gain.gains()[k];
            g * g * u0.values()[k].norm_sqr()
        })
        * da)
}

/// g_opt = β·u_I/|u₀(·,0)|, clamped to 0 in cells below the intensity floor
/// and re-centered so S̄(0) = 0 exactly.
pub fn optimal_gain(
    model: &ImageModel,
    grid: &TransverseGrid,
    beta: f64,
) -> Result<GainDistribution> {
    if !beta.is_finite() || beta == 0.0 {
        return Err(Error::InvalidModel("beta must be finite and nonzero"));
    }
    if compute_a(model, grid)?.is_infinite() {
        return Err(Error::NoIntensityScheme);
    }
    let u_i = noise_mode(model, grid)?;
    let u0 = model.mode_field(grid, 0.0)?;
    let da = grid.cell_measure();
    let n = grid.num_cells();

    let cell_intensity = |k: usize| u0.values()[k].norm_sqr() * da;
    let max_intensity = (0..n).map(cell_intensity).fold(0.0, f64::max);
    let floor = GAIN_CLAMP_FRACTION * max_intensity;
    let lit = |k: usize| cell_intensity(k) >= floor;

    let mut gains: Vec<f64> = (0..n)
        .map(|k| {
            if lit(k) {
                beta * u_i.values()[k].re / u0.values()[k].norm()
            } else {
                0.0
            }
        })
        .collect();

    // Balance over the lit cells only, so the clamped region keeps gain 0.
    let weight = pairwise_sum_by(n, |k| if lit(k) { cell_intensity(k) } else { 0.0 });
    let raw = pairwise_sum_by(n, |k| gains[k] * cell_intensity(k));
    let c = raw / weight;
    for (k, g) in gains.iter_mut().enumerate() {
        if lit(k) {
            *g -= c;
        }
    }

    GainDistribution::new(*grid, gains, beta)
}

fn require_noise_mode_gain(gain: &GainDistribution, model: &ImageModel) -> Result<()> {
    let u_i = noise_mode(model, gain.grid())?;
    let u0 = model.mode_field(gain.grid(), 0.0)?;
    let da = gain.grid().cell_measure();
    // Compare g·|u₀| against β·u_I in L²; the weighting makes clamped and
    // re-centered cells count by the intensity they actually carry.
    let dist2 = pairwise_sum_by(gain.gains().len(), |k| {
        let d = gain.gains()[k] * u0.values()[k].norm() - gain.beta() * u_i.values()[k].re;
        d * d
    }) * da;
    if dist2.sqrt() > NOISE_MODE_MATCH_TOL * gain.beta().abs() {
        return Err(Error::SqueezedGainMismatch);
    }
    Ok(())
}

/// First-order response of the summed signal, dS̄/dp at p = 0:
/// 2N·Σ g·|u₀|·∂_p|u₀|·dA. The Monte-Carlo estimator divides by exactly
/// this slope, which is what makes its spread land on the closed-form
/// limit.
pub fn signal_slope(gain: &GainDistribution, model: &ImageModel, photons: f64) -> Result<f64> {
    let md = model.modulus_derivative(gain.grid())?;
    let u0 = model.mode_field(gain.grid(), 0.0)?;
    let da = gain.grid().cell_measure();
    let n = gain.gains().len();

    let slope = 2.0
        * photons
        * pairwise_sum_by(n, |k| {
            gain.gains()[k] * u0.values()[k].norm() * md.values()[k].re
        })
        * da;
    let gain_norm2 = pairwise_sum_by(n, |k| {
        let g = gain.gains()[k];
        g * g * u0.values()[k].norm_sqr()
    }) * da;
    let slope_scale = 2.0 * photons * (gain_norm2 * md.norm_sq()).sqrt();
    if slope.abs() <= DERIVATIVE_NORM_FLOOR * slope_scale {
        return Err(Error::GainInsensitiveToP);
    }
    Ok(slope)
}

/// First-order report: mean = p·dS̄/dp|₀, variance per [`noise_variance`],
/// snr = mean²/variance, and p_min the p with snr = 1.
pub fn scheme_report(
    gain: &GainDistribution,
    model: &ImageModel,
    photons: f64,
    sigma_p2: f64,
    p: f64,
    squeezed_noise_mode: bool,
) -> Result<DetectionReport> {
    let slope = signal_slope(gain, model, photons)?;
    let variance = noise_variance(gain, model, photons, sigma_p2, squeezed_noise_mode)?;
    let mean = slope * p;
    Ok(DetectionReport {
        mean_signal: mean,
        noise_variance: variance,
        snr: mean * mean / variance,
        p_min: variance.sqrt() / slope.abs(),
    })
}
