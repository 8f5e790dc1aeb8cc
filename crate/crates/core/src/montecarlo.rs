//! Generative simulation of full detection records and estimator
//! benchmarking against the closed-form limits.
//!
//! Three noise models drive the samplers:
//!
//! * `poisson`: independent per-pixel photon counts, the shot noise of
//!   coherent illumination on an ideal array.
//! * `sub_poisson_gaussian`: a continuous Gaussian surrogate
//!   Normal(n̄, σ_P²·n̄) for illumination with intensity fluctuations below
//!   the Poisson level; second-moment exact, valid for bright pixels.
//! * `gaussian_field`: per-cell complex field samples whose local amplitude
//!   quadrature has variance σ_P² and phase quadrature σ_Q² in mode-level
//!   shot-noise units (per-cell variance σ²/dA, so the projection onto any
//!   normalized mode has variance σ²).
//!
//! The linear estimators invert the first-order mean signal of each scheme;
//! [`run_batch`] collects their spread over many trials, reproducibly and
//! independently of thread count thanks to counter-keyed streams. As an
//! independent oracle, [`empirical_fisher`] measures the Fisher information
//! by brute force: sample, evaluate the exact log-likelihood on a parameter
//! stencil, average the negated second difference.

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::array_detection::{self, GainDistribution};
use crate::bounds::DARK_CELL_FRACTION;
use crate::homodyne::{self, HomodyneConfig};
use crate::models::{ImageModel, Illumination, MODULUS_FLOOR_FACTOR};
use crate::rng::{stream, StreamPurpose};
use crate::transverse::{pairwise_sum_by, TransverseGrid};
use crate::{Error, Result};

/// Fewer trials than this cannot resolve anything interesting.
pub const MIN_TRIALS: usize = 100;

/// Brute-force Fisher limits: likelihood stencils over more cells or more
/// photons than this are not worth their cost.
pub const MAX_FISHER_CELLS: usize = 64;
pub const MAX_FISHER_PHOTONS: f64 = 1e3;

/// Step-halving estimates of the empirical Fisher information may disagree
/// by at most this relative amount.
pub const FISHER_STEP_TOL: f64 = 0.05;

/// Per-cell Poisson means above this leave the plausible count range.
const MAX_CELL_MEAN: f64 = 1e12;

/// Cells with mean counts below this draw exactly zero.
const TINY_MEAN: f64 = 1e-14;

/// |σ_P² − 1| within this counts as coherent.
const COHERENT_TOL: f64 = 1e-12;

/// Which generative noise model drives a sampler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Poisson,
    SubPoissonGaussian { sigma_p2: f64 },
    GaussianField { sigma_p2: f64, sigma_q2: f64 },
}

impl NoiseKind {
    /// The intensity-detection noise model of an illumination: Poisson at
    /// σ_P² = 1, the Gaussian surrogate below, an error above (photon
    /// counting cannot see excess-noise light in this crate's model).
    pub fn for_intensity(illumination: &Illumination) -> Result<Self> {
        let s = illumination.sigma_p2();
        if (s - 1.0).abs() <= COHERENT_TOL {
            Ok(NoiseKind::Poisson)
        } else if s < 1.0 {
            Ok(NoiseKind::SubPoissonGaussian { sigma_p2: s })
        } else {
            Err(Error::InvalidMonteCarlo(
                "intensity detection requires sigma_P^2 <= 1",
            ))
        }
    }

    /// The field-detection noise model of an illumination.
    pub fn for_field(illumination: &Illumination) -> Self {
        NoiseKind::GaussianField {
            sigma_p2: illumination.sigma_p2(),
            sigma_q2: illumination.sigma_q2(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseKind::Poisson => "poisson",
            NoiseKind::SubPoissonGaussian { .. } => "sub_poisson_gaussian",
            NoiseKind::GaussianField { .. } => "gaussian_field",
        }
    }
}

/// Per-cell count sampler, precomputed for one (model, grid, N, noise, p).
struct IntensitySampler {
    means: Vec<f64>,
    noise: IntensityNoise,
}

enum IntensityNoise {
    Poisson(Vec<Option<Poisson<f64>>>),
    SubPoisson { std_devs: Vec<f64> },
}

impl IntensitySampler {
    fn new(
        model: &ImageModel,
        grid: &TransverseGrid,
        photons: f64,
        noise: NoiseKind,
        p: f64,
    ) -> Result<Self> {
        let u = model.mode_field(grid, p)?;
        let da = grid.cell_measure();
        let means: Vec<f64> = u.values().iter().map(|v| photons * v.norm_sqr() * da).collect();
        if means.iter().any(|&m| m > MAX_CELL_MEAN) {
            return Err(Error::InvalidMonteCarlo("per-cell photon mean too large"));
        }
        let noise = match noise {
            NoiseKind::Poisson => IntensityNoise::Poisson(
                means
                    .iter()
                    .map(|&m| {
                        (m > TINY_MEAN).then(|| Poisson::new(m).expect("mean positive and finite"))
                    })
                    .collect(),
            ),
            NoiseKind::SubPoissonGaussian { sigma_p2 } => {
                if sigma_p2 > 1.0 + COHERENT_TOL {
                    return Err(Error::InvalidMonteCarlo(
                        "sub-Poisson surrogate requires sigma_P^2 <= 1",
                    ));
                }
                IntensityNoise::SubPoisson {
                    std_devs: means.iter().map(|&m| (sigma_p2 * m).sqrt()).collect(),
                }
            }
            NoiseKind::GaussianField { .. } => {
                return Err(Error::InvalidMonteCarlo("invalid noise kind for scheme"))
            }
        };
        Ok(Self { means, noise })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match &self.noise {
            IntensityNoise::Poisson(cells) => cells
                .iter()
                .map(|c| c.as_ref().map_or(0.0, |dist| dist.sample(rng)))
                .collect(),
            IntensityNoise::SubPoisson { std_devs } => self
                .means
                .iter()
                .zip(std_devs)
                .map(|(&m, &s)| m + s * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        }
    }
}

/// Per-cell complex field sampler in the local mean-field gauge: the
/// quadrature along u₀(r, p)/|u₀(r, p)| has variance σ_P²/dA, the
/// orthogonal one σ_Q²/dA.
struct FieldSampler {
    phases: Vec<Complex64>,
    mean_amplitude: Vec<f64>,
    std_p: f64,
    std_q: f64,
}

impl FieldSampler {
    fn new(
        model: &ImageModel,
        grid: &TransverseGrid,
        photons: f64,
        noise: NoiseKind,
        p: f64,
    ) -> Result<Self> {
        let NoiseKind::GaussianField { sigma_p2, sigma_q2 } = noise else {
            return Err(Error::InvalidMonteCarlo("invalid noise kind for scheme"));
        };
        let u = model.mode_field(grid, p)?;
        let floor = MODULUS_FLOOR_FACTOR * u.max_abs();
        let amp = 2.0 * photons.sqrt();
        let phases = u
            .values()
            .iter()
            .map(|v| {
                if v.norm() >= floor {
                    v / v.norm()
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect();
        let mean_amplitude = u.values().iter().map(|v| amp * v.norm()).collect();
        let da = grid.cell_measure();
        Ok(Self {
            phases,
            mean_amplitude,
            std_p: (sigma_p2 / da).sqrt(),
            std_q: (sigma_q2 / da).sqrt(),
        })
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        self.phases
            .iter()
            .zip(&self.mean_amplitude)
            .map(|(phase, &mean)| {
                let p = mean + self.std_p * rng.sample::<f64, _>(StandardNormal);
                let q = self.std_q * rng.sample::<f64, _>(StandardNormal);
                phase * Complex64::new(p, q)
            })
            .collect()
    }
}

/// One intensity detection record: independent per-pixel counts at
/// parameter value p.
pub fn sample_intensity(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
    noise: NoiseKind,
    p: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = IntensitySampler::new(model, grid, photons, noise, p)?;
    let mut rng = stream(seed, 0, StreamPurpose::IntensitySamples);
    Ok(sampler.draw(&mut rng))
}

/// One field detection record: independent per-cell complex samples at
/// parameter value p.
pub fn sample_field(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
    noise: NoiseKind,
    p: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    let sampler = FieldSampler::new(model, grid, photons, noise, p)?;
    let mut rng = stream(seed, 0, StreamPurpose::FieldSamples);
    Ok(sampler.draw(&mut rng))
}

/// Weighted count statistic S = Σ g_k·n_k.
fn weighted_counts(gain: &GainDistribution, counts: &[f64]) -> f64 {
    pairwise_sum_by(counts.len(), |k| gain.gains()[k] * counts[k])
}

/// Homodyne difference statistic n₋ = √N_LO·Σ Re[conj(m_k)·E_k]·dA for
/// measured mode m.
fn difference_statistic(measured: &[Complex64], samples: &[Complex64], da: f64, n_lo: f64) -> f64 {
    n_lo.sqrt()
        * pairwise_sum_by(samples.len(), |k| (measured[k].conj() * samples[k]).re)
        * da
}

/// Linear estimator of the intensity scheme: p̂ = S/(dS̄/dp). Unbiased to
/// first order; exactly unbiased for families whose mean signal is linear
/// in p.
pub fn estimate_intensity(
    counts: &[f64],
    gain: &GainDistribution,
    model: &ImageModel,
    photons: f64,
) -> Result<f64> {
    if counts.len() != gain.gains().len() {
        return Err(Error::IncompatibleGrids);
    }
    if !gain.is_balanced_for(model)? {
        return Err(Error::InvalidMonteCarlo("gain must be balanced for the model"));
    }
    let slope = array_detection::signal_slope(gain, model, photons)?;
    Ok(weighted_counts(gain, counts) / slope)
}

/// Linear estimator of the homodyne scheme: p̂ = n₋/(∂n̄₋/∂p). With a
/// matched LO at the tuned phase this is b·n₋/(2√(N·N_LO)).
pub fn estimate_field(
    samples: &[Complex64],
    config: &HomodyneConfig,
    model: &ImageModel,
) -> Result<f64> {
    if samples.len() != config.grid().num_cells() {
        return Err(Error::IncompatibleGrids);
    }
    let slope = homodyne::signal_slope(config, model)?;
    let d = model.mode_derivative(config.grid())?;
    let scale = 2.0 * (config.photons() * config.n_lo()).sqrt() * d.norm_sq().sqrt();
    if slope.abs() <= 1e-12 * scale {
        return Err(Error::GainInsensitiveToP);
    }
    let measured = config.measured_mode();
    let n_minus = difference_statistic(
        measured.values(),
        samples,
        config.grid().cell_measure(),
        config.n_lo(),
    );
    Ok(n_minus / slope)
}

/// Which detection scheme a batch simulates, with its configuration.
#[derive(Clone, Debug)]
pub enum SchemeConfig {
    Intensity { gain: GainDistribution },
    Field { homodyne: HomodyneConfig },
}

impl SchemeConfig {
    pub fn kind(&self) -> SchemeKind {
        match self {
            SchemeConfig::Intensity { .. } => SchemeKind::Intensity,
            SchemeConfig::Field { .. } => SchemeKind::Field,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemeKind {
    Intensity,
    Field,
}

impl SchemeKind {
    pub fn label(&self) -> &'static str {
        match self {
            SchemeKind::Intensity => "intensity",
            SchemeKind::Field => "field",
        }
    }
}

/// The outcome of repeated simulated acquisitions with one estimator.
#[derive(Clone, Debug)]
pub struct TrialBatch {
    pub scheme: SchemeKind,
    pub noise: NoiseKind,
    pub n_trials: usize,
    pub seed: u64,
    pub true_p: f64,
    pub estimates: Vec<f64>,
    pub mean_estimate: f64,
    pub std_estimate: f64,
    pub std_error_of_std: f64,
}

impl TrialBatch {
    fn new(
        scheme: SchemeKind,
        noise: NoiseKind,
        seed: u64,
        true_p: f64,
        estimates: Vec<f64>,
    ) -> Self {
        let (mean_estimate, std_estimate, std_error_of_std) = summarize(&estimates);
        Self {
            scheme,
            noise,
            n_trials: estimates.len(),
            seed,
            true_p,
            estimates,
            mean_estimate,
            std_estimate,
            std_error_of_std,
        }
    }

    /// Recomputes (mean, std, std error of std) from the stored estimates;
    /// matches the stored summaries by construction.
    pub fn recomputed_summaries(&self) -> (f64, f64, f64) {
        summarize(&self.estimates)
    }
}

fn summarize(estimates: &[f64]) -> (f64, f64, f64) {
    let n = estimates.len();
    let mean = pairwise_sum_by(n, |k| estimates[k]) / n as f64;
    let var = pairwise_sum_by(n, |k| {
        let d = estimates[k] - mean;
        d * d
    }) / (n - 1) as f64;
    let std = var.sqrt();
    (mean, std, std / (2.0 * (n - 1) as f64).sqrt())
}

/// Runs `n_trials` independent simulated acquisitions and estimates.
///
/// Deterministic in (seed, configuration): every trial draws from its own
/// counter-keyed stream, so the batch is bit-for-bit reproducible and
/// independent of how trials are scheduled across threads.
pub fn run_batch(
    scheme: &SchemeConfig,
    model: &ImageModel,
    illumination: &Illumination,
    true_p: f64,
    n_trials: usize,
    seed: u64,
) -> Result<TrialBatch> {
    if n_trials < MIN_TRIALS {
        return Err(Error::InvalidMonteCarlo("at least 100 trials required"));
    }
    if !true_p.is_finite() {
        return Err(Error::InvalidMonteCarlo("true_p must be finite"));
    }
    let photons = illumination.photons();

    match scheme {
        SchemeConfig::Intensity { gain } => {
            let noise = NoiseKind::for_intensity(illumination)?;
            if !gain.is_balanced_for(model)? {
                return Err(Error::InvalidMonteCarlo("gain must be balanced for the model"));
            }
            let slope = array_detection::signal_slope(gain, model, photons)?;
            let sampler = IntensitySampler::new(model, gain.grid(), photons, noise, true_p)?;
            let estimates: Vec<f64> = (0..n_trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = stream(seed, trial as u64, StreamPurpose::IntensitySamples);
                    let counts = sampler.draw(&mut rng);
                    weighted_counts(gain, &counts) / slope
                })
                .collect();
            Ok(TrialBatch::new(SchemeKind::Intensity, noise, seed, true_p, estimates))
        }
        SchemeConfig::Field { homodyne: config } => {
            if (config.photons() - photons).abs() > 1e-9 * photons {
                return Err(Error::InvalidMonteCarlo(
                    "homodyne photon number disagrees with illumination",
                ));
            }
            let noise = NoiseKind::for_field(illumination);
            let slope = homodyne::signal_slope(config, model)?;
            let d = model.mode_derivative(config.grid())?;
            let scale = 2.0 * (photons * config.n_lo()).sqrt() * d.norm_sq().sqrt();
            if slope.abs() <= 1e-12 * scale {
                return Err(Error::GainInsensitiveToP);
            }
            let sampler = FieldSampler::new(model, config.grid(), photons, noise, true_p)?;
            let measured = config.measured_mode();
            let da = config.grid().cell_measure();
            let n_lo = config.n_lo();
            let estimates: Vec<f64> = (0..n_trials)
                .into_par_iter()
                .map(|trial| {
                    let mut rng = stream(seed, trial as u64, StreamPurpose::FieldSamples);
                    let samples = sampler.draw(&mut rng);
                    difference_statistic(measured.values(), &samples, da, n_lo) / slope
                })
                .collect();
            Ok(TrialBatch::new(SchemeKind::Field, noise, seed, true_p, estimates))
        }
    }
}

/// Brute-force Fisher information: samples at p = 0, evaluates the exact
/// log-likelihood at {−h, 0, +h}, averages the negated central second
/// difference. Cross-checked at step h/2 with the same samples; relative
/// disagreement beyond [`FISHER_STEP_TOL`] reports the step as too large.
pub fn empirical_fisher(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
    noise: NoiseKind,
    p_step: f64,
    n_trials: usize,
    seed: u64,
) -> Result<f64> {
    if grid.num_cells() > MAX_FISHER_CELLS {
        return Err(Error::InvalidMonteCarlo("grid too large for brute-force Fisher"));
    }
    if photons > MAX_FISHER_PHOTONS {
        return Err(Error::InvalidMonteCarlo("photon number too large for brute-force Fisher"));
    }
    if n_trials < MIN_TRIALS {
        return Err(Error::InvalidMonteCarlo("at least 100 trials required"));
    }
    if !(p_step > 0.0) || !p_step.is_finite() {
        return Err(Error::InvalidMonteCarlo("p_step must be positive and finite"));
    }

    let trial_pairs: Vec<(f64, f64)> = match noise {
        NoiseKind::Poisson => poisson_fisher_trials(model, grid, photons, p_step, n_trials, seed)?,
        NoiseKind::GaussianField { .. } => {
            gaussian_fisher_trials(model, grid, photons, noise, p_step, n_trials, seed)?
        }
        NoiseKind::SubPoissonGaussian { .. } => {
            return Err(Error::InvalidMonteCarlo(
                "brute-force Fisher supports poisson and gaussian_field noise",
            ))
        }
    };

    let n = trial_pairs.len();
    let full = pairwise_sum_by(n, |k| trial_pairs[k].0) / n as f64;
    let half = pairwise_sum_by(n, |k| trial_pairs[k].1) / n as f64;
    let floor = 1e-9 * photons;
    let disagreement = (full - half).abs() / half.abs().max(floor);
    if disagreement > FISHER_STEP_TOL {
        return Err(Error::StepTooLarge(100.0 * disagreement));
    }
    Ok(half.max(0.0))
}

/// Per-trial (−Δ²_h l, −Δ²_{h/2} l)/h² pairs for the Poisson likelihood
/// l = Σ n_k·ln n̄_k(p) − n̄_k(p), sampled at p = 0.
fn poisson_fisher_trials(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
    h: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let means_at = |p: f64| -> Result<Vec<f64>> {
        let u = model.mode_field(grid, p)?;
        let da = grid.cell_measure();
        Ok(u.values().iter().map(|v| photons * v.norm_sqr() * da).collect())
    };
    let m0 = means_at(0.0)?;
    let stencil = [
        means_at(h)?,
        means_at(h / 2.0)?,
        means_at(-h / 2.0)?,
        means_at(-h)?,
    ];
    let [mp2, mp1, mm1, mm2] = &stencil;

    let n = grid.num_cells();
    let dark = DARK_CELL_FRACTION * photons;
    // ln-terms only where the whole stencil is safely positive; dark cells
    // draw no photons anyway.
    let lit: Vec<bool> = (0..n)
        .map(|k| m0[k] > dark && mp2[k] > TINY_MEAN && mm2[k] > TINY_MEAN && mp1[k] > TINY_MEAN && mm1[k] > TINY_MEAN)
        .collect();
    let log_d2 = |plus: &[f64], minus: &[f64], step: f64| -> Vec<f64> {
        (0..n)
            .map(|k| {
                if lit[k] {
                    (plus[k].ln() - 2.0 * m0[k].ln() + minus[k].ln()) / (step * step)
                } else {
                    0.0
                }
            })
            .collect()
    };
    let d2_full = log_d2(mp2, mm2, h);
    let d2_half = log_d2(mp1, mm1, h / 2.0);
    let curvature = |plus: &[f64], minus: &[f64], step: f64| -> f64 {
        pairwise_sum_by(n, |k| plus[k] - 2.0 * m0[k] + minus[k]) / (step * step)
    };
    let c_full = curvature(mp2, mm2, h);
    let c_half = curvature(mp1, mm1, h / 2.0);

    let sampler = IntensitySampler::new(model, grid, photons, NoiseKind::Poisson, 0.0)?;
    Ok((0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, trial as u64, StreamPurpose::FisherTrial);
            let counts = sampler.draw(&mut rng);
            let full = c_full - pairwise_sum_by(n, |k| counts[k] * d2_full[k]);
            let half = c_half - pairwise_sum_by(n, |k| counts[k] * d2_half[k]);
            (full, half)
        })
        .collect())
}

/// As [`poisson_fisher_trials`] for the Gaussian field likelihood
/// l = −Σ (P_k^{(p)} − P̄_k(p))²/(2σ_P²v) + (Q_k^{(p)})²/(2σ_Q²v), where
/// the quadratures are taken in the local mean-field gauge of each p.
fn gaussian_fisher_trials(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
    noise: NoiseKind,
    h: f64,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let NoiseKind::GaussianField { sigma_p2, sigma_q2 } = noise else {
        unreachable!("caller matched the noise kind");
    };
    let da = grid.cell_measure();
    let amp = 2.0 * photons.sqrt();
    let n = grid.num_cells();

    struct Stencil {
        phases: Vec<Complex64>,
        means: Vec<f64>,
    }
    let stencil_at = |p: f64| -> Result<Stencil> {
        let u = model.mode_field(grid, p)?;
        let floor = MODULUS_FLOOR_FACTOR * u.max_abs();
        Ok(Stencil {
            phases: u
                .values()
                .iter()
                .map(|v| {
                    if v.norm() >= floor {
                        v / v.norm()
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
                .collect(),
            means: u.values().iter().map(|v| amp * v.norm()).collect(),
        })
    };
    let s0 = stencil_at(0.0)?;
    let sp2 = stencil_at(h)?;
    let sp1 = stencil_at(h / 2.0)?;
    let sm1 = stencil_at(-h / 2.0)?;
    let sm2 = stencil_at(-h)?;

    let wp = da / (2.0 * sigma_p2);
    let wq = da / (2.0 * sigma_q2);
    let loglik = |samples: &[Complex64], s: &Stencil| -> f64 {
        -pairwise_sum_by(n, |k| {
            let rotated = s.phases[k].conj() * samples[k];
            let dp = rotated.re - s.means[k];
            wp * dp * dp + wq * rotated.im * rotated.im
        })
    };

    let sampler = FieldSampler::new(model, grid, photons, noise, 0.0)?;
    Ok((0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = stream(seed, trial as u64, StreamPurpose::FisherTrial);
            let samples = sampler.draw(&mut rng);
            let l0 = loglik(&samples, &s0);
            let full = -(loglik(&samples, &sp2) - 2.0 * l0 + loglik(&samples, &sm2)) / (h * h);
            let step = h / 2.0;
            let half =
                -(loglik(&samples, &sp1) - 2.0 * l0 + loglik(&samples, &sm1)) / (step * step);
            (full, half)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_detection::optimal_gain;
    use crate::bounds::{compute_a, compute_b};
    use crate::homodyne::tune_phase;
    use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson as PoissonPmf};

    fn rel(x: f64, expect: f64) -> f64 {
        (x - expect).abs() / expect.abs()
    }

    fn displaced() -> (ImageModel, TransverseGrid) {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        (model, grid)
    }

    fn coarse_grid() -> TransverseGrid {
        TransverseGrid::line(6.0, 16).unwrap()
    }

    fn intensity_scheme(model: &ImageModel, grid: &TransverseGrid) -> SchemeConfig {
        SchemeConfig::Intensity {
            gain: optimal_gain(model, grid, 1.0).unwrap(),
        }
    }

    fn field_scheme(model: &ImageModel, grid: &TransverseGrid, photons: f64) -> SchemeConfig {
        let config = HomodyneConfig::mode_matched(model, grid, photons).unwrap();
        let theta = tune_phase(&config, model).unwrap();
        SchemeConfig::Field {
            homodyne: config.with_phase(theta).unwrap(),
        }
    }

    #[test]
    fn poisson_counts_conserve_total_photons() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = coarse_grid();
        let photons = 1e4;
        let trials = 10_000;
        let mut total = 0.0;
        for t in 0..trials {
            let counts =
                sample_intensity(&model, &grid, photons, NoiseKind::Poisson, 0.0, t).unwrap();
            total += counts.iter().sum::<f64>();
        }
        let mean_total = total / trials as f64;
        // std of the mean of totals is √(N/trials) = 1.
        assert!((mean_total - photons).abs() < 3.0, "{mean_total}");
    }

    #[test]
    fn sub_poisson_variance_is_reduced() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = coarse_grid();
        let photons = 1e4;
        let noise = NoiseKind::SubPoissonGaussian { sigma_p2: 0.5 };
        let sampler = IntensitySampler::new(&model, &grid, photons, noise, 0.0).unwrap();
        let bright = (0..grid.num_cells())
            .max_by(|&i, &j| sampler.means[i].total_cmp(&sampler.means[j]))
            .unwrap();
        let trials = 100_000;
        let draws: Vec<f64> = (0..trials)
            .map(|t| {
                let mut rng = stream(11, t, StreamPurpose::IntensitySamples);
                sampler.draw(&mut rng)[bright]
            })
            .collect();
        let (_, std, _) = summarize(&draws);
        let ratio = std * std / sampler.means[bright];
        assert!((ratio - 0.5).abs() < 0.05 * 0.5, "{ratio}");
    }

    #[test]
    fn bright_pixel_histogram_is_poisson() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = coarse_grid();
        let photons = 50.0;
        let sampler = IntensitySampler::new(&model, &grid, photons, NoiseKind::Poisson, 0.0).unwrap();
        let bright = (0..grid.num_cells())
            .max_by(|&i, &j| sampler.means[i].total_cmp(&sampler.means[j]))
            .unwrap();
        let lambda = sampler.means[bright];
        let trials = 100_000usize;
        let mut histogram = std::collections::HashMap::new();
        for t in 0..trials {
            let mut rng = stream(23, t as u64, StreamPurpose::IntensitySamples);
            let count = sampler.draw(&mut rng)[bright] as u64;
            *histogram.entry(count).or_insert(0usize) += 1;
        }

        // Bin counts so every expected frequency is at least 5, tails merged.
        let pmf = PoissonPmf::new(lambda).unwrap();
        let k_max = (lambda + 10.0 * lambda.sqrt()) as u64;
        let mut bins: Vec<(f64, f64)> = Vec::new();
        let mut acc = (0.0, 0.0);
        for k in 0..=k_max {
            acc.0 += (histogram.get(&k).copied().unwrap_or(0)) as f64;
            acc.1 += trials as f64 * pmf.pmf(k);
            if acc.1 >= 5.0 {
                bins.push(acc);
                acc = (0.0, 0.0);
            }
        }
        let beyond: usize = histogram.iter().filter(|(&k, _)| k > k_max).map(|(_, &c)| c).sum();
        acc.0 += beyond as f64;
        acc.1 += trials as f64 * (1.0 - (0..=k_max).map(|k| pmf.pmf(k)).sum::<f64>());
        if acc.1 > 0.0 {
            bins.push(acc);
        }

        let chi2: f64 = bins.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
        let dof = (bins.len() - 1) as f64;
        let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "chi2 {chi2} over {dof} dof exceeds {critical}");
    }

    #[test]
    fn field_samples_have_declared_moments() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = coarse_grid();
        let photons = 1e4;
        let noise = NoiseKind::GaussianField { sigma_p2: 1.0, sigma_q2: 1.0 };
        let sampler = FieldSampler::new(&model, &grid, photons, noise, 0.0).unwrap();
        let bright = (0..grid.num_cells())
            .max_by(|&i, &j| sampler.mean_amplitude[i].total_cmp(&sampler.mean_amplitude[j]))
            .unwrap();
        let trials = 100_000;
        let mut ps = Vec::with_capacity(trials);
        let mut qs = Vec::with_capacity(trials);
        for t in 0..trials {
            let mut rng = stream(31, t as u64, StreamPurpose::FieldSamples);
            let sample = sampler.draw(&mut rng)[bright];
            ps.push(sample.re);
            qs.push(sample.im);
        }
        let (p_mean, p_std, _) = summarize(&ps);
        let (q_mean, q_std, _) = summarize(&qs);
        let cell_var = 1.0 / grid.cell_measure();
        let se = (cell_var / trials as f64).sqrt();
        assert!((p_mean - sampler.mean_amplitude[bright]).abs() < 3.0 * se);
        assert!(q_mean.abs() < 3.0 * se);
        assert!(rel(p_std * p_std, cell_var) < 0.05);
        assert!(rel(q_std * q_std, cell_var) < 0.05);
        let n = ps.len();
        let cov = pairwise_sum_by(n, |k| (ps[k] - p_mean) * (qs[k] - q_mean)) / (n - 1) as f64;
        assert!(cov.abs() < 3.0 * cell_var / (trials as f64).sqrt());
    }

    #[test]
    fn mode_projection_variance_is_mode_level_sigma() {
        let (model, _) = displaced();
        let grid = coarse_grid();
        let photons = 1e4;
        for sigma_p2 in [1.0, 0.5] {
            let noise = NoiseKind::GaussianField { sigma_p2, sigma_q2: 1.0 / sigma_p2 };
            let sampler = FieldSampler::new(&model, &grid, photons, noise, 0.0).unwrap();
            let u_e = crate::bounds::signal_mode(&model, &grid).unwrap();
            let mean_field = model.mode_field(&grid, 0.0).unwrap();
            let amp = 2.0 * photons.sqrt();
            let da = grid.cell_measure();
            let trials = 100_000;
            let projections: Vec<f64> = (0..trials)
                .map(|t| {
                    let mut rng = stream(37, t, StreamPurpose::FieldSamples);
                    let sample = sampler.draw(&mut rng);
                    pairwise_sum_by(sample.len(), |k| {
                        let delta = sample[k] - amp * mean_field.values()[k];
                        (u_e.values()[k].conj() * delta).re
                    }) * da
                })
                .collect();
            let (_, std, _) = summarize(&projections);
            assert!(rel(std * std, sigma_p2) < 0.05, "σ_P²={sigma_p2}: {}", std * std);
        }
    }

    #[test]
    fn intensity_estimator_reaches_the_bound() {
        let (model, grid) = displaced();
        let photons = 1e4;
        let illumination = Illumination::coherent(photons).unwrap();
        let scheme = intensity_scheme(&model, &grid);
        let n_trials = 20_000;
        let batch = run_batch(&scheme, &model, &illumination, 0.0, n_trials, 41).unwrap();
        assert_eq!(batch.noise, NoiseKind::Poisson);

        let a = compute_a(&model, &grid).unwrap();
        let crb = a / (2.0 * photons.sqrt());
        let ratio = batch.std_estimate / crb;
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
        assert!(batch.mean_estimate.abs() < 3.0 * batch.std_estimate / (n_trials as f64).sqrt());
    }

    #[test]
    fn intensity_estimator_is_unbiased_at_small_p() {
        let (model, grid) = displaced();
        let photons = 1e4;
        let illumination = Illumination::coherent(photons).unwrap();
        let scheme = intensity_scheme(&model, &grid);
        let true_p = 0.005;
        let n_trials = 20_000;
        let batch = run_batch(&scheme, &model, &illumination, true_p, n_trials, 43).unwrap();
        let tol = 3.0 * batch.std_estimate / (n_trials as f64).sqrt();
        assert!((batch.mean_estimate - true_p).abs() < tol, "{}", batch.mean_estimate);
    }

    #[test]
    fn field_estimator_reaches_the_bound() {
        let (model, grid) = displaced();
        let photons = 1e4;
        let illumination = Illumination::coherent(photons).unwrap();
        let scheme = field_scheme(&model, &grid, photons);
        let n_trials = 20_000;
        let batch = run_batch(&scheme, &model, &illumination, 0.0, n_trials, 47).unwrap();

        let b = compute_b(&model, &grid).unwrap();
        let crb = b / (2.0 * photons.sqrt());
        let ratio = batch.std_estimate / crb;
        assert!((ratio - 1.0).abs() < 0.02, "{ratio}");
    }

    #[test]
    fn squeezing_shrinks_both_schemes_by_sqrt_two() {
        let (model, grid) = displaced();
        let photons = 1e4;
        let coherent = Illumination::coherent(photons).unwrap();
        let squeezed = Illumination::squeezed(photons, 0.5).unwrap();
        let n_trials = 20_000;

        let intensity = intensity_scheme(&model, &grid);
        let i_coh = run_batch(&intensity, &model, &coherent, 0.0, n_trials, 51).unwrap();
        let i_sq = run_batch(&intensity, &model, &squeezed, 0.0, n_trials, 53).unwrap();
        assert_eq!(i_sq.noise, NoiseKind::SubPoissonGaussian { sigma_p2: 0.5 });
        let ratio = i_coh.std_estimate / i_sq.std_estimate;
        assert!(rel(ratio, 2f64.sqrt()) < 0.03, "intensity {ratio}");

        let field = field_scheme(&model, &grid, photons);
        let f_coh = run_batch(&field, &model, &coherent, 0.0, n_trials, 57).unwrap();
        let f_sq = run_batch(&field, &model, &squeezed, 0.0, n_trials, 59).unwrap();
        let ratio = f_coh.std_estimate / f_sq.std_estimate;
        assert!(rel(ratio, 2f64.sqrt()) < 0.03, "field {ratio}");
    }

    #[test]
    fn batches_are_reproducible_and_seed_sensitive() {
        let (model, grid) = displaced();
        let illumination = Illumination::coherent(1e3).unwrap();
        let scheme = intensity_scheme(&model, &grid);
        let first = run_batch(&scheme, &model, &illumination, 0.0, 200, 61).unwrap();
        let second = run_batch(&scheme, &model, &illumination, 0.0, 200, 61).unwrap();
        assert_eq!(first.estimates, second.estimates);
        let other = run_batch(&scheme, &model, &illumination, 0.0, 200, 62).unwrap();
        assert_ne!(first.estimates, other.estimates);
    }

    #[test]
    fn batches_are_thread_count_independent() {
        let (model, grid) = displaced();
        let illumination = Illumination::coherent(1e3).unwrap();
        let scheme = field_scheme(&model, &grid, 1e3);
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_batch(&scheme, &model, &illumination, 0.0, 500, 67).unwrap());
        let quad = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_batch(&scheme, &model, &illumination, 0.0, 500, 67).unwrap());
        assert_eq!(single.estimates, quad.estimates);
    }

    #[test]
    fn summaries_match_their_estimates() {
        let (model, grid) = displaced();
        let illumination = Illumination::coherent(1e3).unwrap();
        let scheme = intensity_scheme(&model, &grid);
        let batch = run_batch(&scheme, &model, &illumination, 0.0, 5000, 71).unwrap();
        let (mean, std, se) = batch.recomputed_summaries();
        assert!(rel(mean, batch.mean_estimate) < 1e-12 || mean == batch.mean_estimate);
        assert!(rel(std, batch.std_estimate) < 1e-12);
        assert!(rel(se, batch.std_error_of_std) < 1e-12);

        // Bootstrap the std error of the std over 50 sub-batches.
        let chunk = batch.n_trials / 50;
        let chunk_stds: Vec<f64> = batch
            .estimates
            .chunks(chunk)
            .take(50)
            .map(|c| summarize(c).1)
            .collect();
        let (_, spread, _) = summarize(&chunk_stds);
        let bootstrap = spread / (50f64).sqrt();
        assert!(
            (batch.std_error_of_std / bootstrap - 1.0).abs() < 0.2,
            "{} vs {bootstrap}",
            batch.std_error_of_std
        );
    }

    #[test]
    fn estimators_invert_reference_statistics() {
        let (model, grid) = displaced();
        let photons = 1e4;
        let gain = optimal_gain(&model, &grid, 1.0).unwrap();
        // Counts exactly at the p = 0 mean signal give p̂ = 0.
        let u0 = model.mode_field(&grid, 0.0).unwrap();
        let da = grid.cell_measure();
        let means: Vec<f64> = u0.values().iter().map(|v| photons * v.norm_sqr() * da).collect();
        let p_hat = estimate_intensity(&means, &gain, &model, photons).unwrap();
        assert!(p_hat.abs() < 1e-9);

        let config = HomodyneConfig::mode_matched(&model, &grid, photons).unwrap();
        let theta = tune_phase(&config, &model).unwrap();
        let config = config.with_phase(theta).unwrap();
        let amp = 2.0 * photons.sqrt();
        let mean_field: Vec<Complex64> = u0.values().iter().map(|v| amp * v).collect();
        let p_hat = estimate_field(&mean_field, &config, &model).unwrap();
        assert!(p_hat.abs() < 1e-9);
    }

    #[test]
    fn estimator_preconditions_are_enforced() {
        let (model, grid) = displaced();
        let unbalanced =
            GainDistribution::new(grid, vec![1.0; grid.num_cells()], 1.0).unwrap();
        let counts = vec![0.0; grid.num_cells()];
        assert!(matches!(
            estimate_intensity(&counts, &unbalanced, &model, 1e4),
            Err(Error::InvalidMonteCarlo(_))
        ));
        let gain = optimal_gain(&model, &grid, 1.0).unwrap();
        assert!(matches!(
            estimate_intensity(&counts[..5], &gain, &model, 1e4),
            Err(Error::IncompatibleGrids)
        ));
    }

    #[test]
    fn run_batch_validates_requests() {
        let (model, grid) = displaced();
        let scheme = intensity_scheme(&model, &grid);
        let coherent = Illumination::coherent(1e4).unwrap();
        assert!(matches!(
            run_batch(&scheme, &model, &coherent, 0.0, 50, 1),
            Err(Error::InvalidMonteCarlo(_))
        ));
        let noisy = Illumination::new(1e4, 1.5, 1.0).unwrap();
        assert!(matches!(
            run_batch(&scheme, &model, &noisy, 0.0, 200, 1),
            Err(Error::InvalidMonteCarlo(_))
        ));
        let config = HomodyneConfig::mode_matched(&model, &grid, 2e4).unwrap();
        let mismatched = SchemeConfig::Field { homodyne: config };
        assert!(matches!(
            run_batch(&mismatched, &model, &coherent, 0.0, 200, 1),
            Err(Error::InvalidMonteCarlo(_))
        ));
    }

    #[test]
    fn sampler_noise_kinds_are_checked() {
        let (model, grid) = displaced();
        let field_noise = NoiseKind::GaussianField { sigma_p2: 1.0, sigma_q2: 1.0 };
        assert!(matches!(
            sample_intensity(&model, &grid, 1e4, field_noise, 0.0, 1),
            Err(Error::InvalidMonteCarlo("invalid noise kind for scheme"))
        ));
        assert!(matches!(
            sample_field(&model, &grid, 1e4, NoiseKind::Poisson, 0.0, 1),
            Err(Error::InvalidMonteCarlo("invalid noise kind for scheme"))
        ));
        let excess = NoiseKind::SubPoissonGaussian { sigma_p2: 1.2 };
        assert!(matches!(
            sample_intensity(&model, &grid, 1e4, excess, 0.0, 1),
            Err(Error::InvalidMonteCarlo(_))
        ));
    }

    #[test]
    fn empirical_fisher_matches_poisson_closed_form() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = coarse_grid();
        let photons = 100.0;
        let fisher =
            empirical_fisher(&model, &grid, photons, NoiseKind::Poisson, 0.01, 100_000, 73)
                .unwrap();
        let a = compute_a(&model, &grid).unwrap();
        let expected = 4.0 * photons / (a * a);
        assert!(rel(fisher, expected) < 0.05, "{fisher} vs {expected}");
    }

    #[test]
    fn empirical_fisher_sees_no_intensity_information_in_phase() {
        let model = ImageModel::phase_tilt(1.0, 1.0).unwrap();
        let grid = coarse_grid();
        let photons = 100.0;
        let fisher =
            empirical_fisher(&model, &grid, photons, NoiseKind::Poisson, 0.01, 10_000, 79).unwrap();
        let b = compute_b(&model, &grid).unwrap();
        assert!(fisher.abs() < 0.05 * 4.0 * photons / (b * b), "{fisher}");
    }

    #[test]
    fn empirical_fisher_matches_gaussian_closed_form() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = coarse_grid();
        let photons = 100.0;
        for sigma_p2 in [1.0, 0.5] {
            let noise = NoiseKind::GaussianField { sigma_p2, sigma_q2: 1.0 / sigma_p2 };
            let fisher =
                empirical_fisher(&model, &grid, photons, noise, 0.01, 100_000, 83).unwrap();
            let b = compute_b(&model, &grid).unwrap();
            let expected = 4.0 * photons / (b * b * sigma_p2);
            assert!(rel(fisher, expected) < 0.05, "σ²={sigma_p2}: {fisher} vs {expected}");
        }
    }

    #[test]
    fn empirical_fisher_rejects_coarse_steps() {
        let model = ImageModel::waist_scaled_gaussian(1.0).unwrap();
        let grid = TransverseGrid::line(6.0, 64).unwrap();
        let result =
            empirical_fisher(&model, &grid, 100.0, NoiseKind::Poisson, 0.4, 5_000, 89);
        assert!(matches!(result, Err(Error::StepTooLarge(_))), "{result:?}");
    }

    #[test]
    fn empirical_fisher_enforces_scale_gates() {
        let (model, grid) = displaced();
        assert!(matches!(
            empirical_fisher(&model, &grid, 100.0, NoiseKind::Poisson, 0.01, 1000, 1),
            Err(Error::InvalidMonteCarlo("grid too large for brute-force Fisher"))
        ));
        let coarse = coarse_grid();
        assert!(matches!(
            empirical_fisher(&model, &coarse, 1e4, NoiseKind::Poisson, 0.01, 1000, 1),
            Err(Error::InvalidMonteCarlo(
                "photon number too large for brute-force Fisher"
            ))
        ));
        let sub = NoiseKind::SubPoissonGaussian { sigma_p2: 0.5 };
        assert!(matches!(
            empirical_fisher(&model, &coarse, 100.0, sub, 0.01, 1000, 1),
            Err(Error::InvalidMonteCarlo(_))
        ));
    }
}
