//! Quantum-noise sensitivity limits for parameters encoded in optical images.
//!
//! A scalar parameter p (a displacement, a defocus, a phase gradient) leaves
//! its trace in the transverse mode u₀(r, p) of a light beam carrying N
//! photons per acquisition. This crate answers two questions about reading p
//! back out:
//!
//! 1. What is the best possible precision any detector can reach? Two
//!    sensitivity scales govern the answer, both computed in [`bounds`]:
//!    an intensity scale `a` from the parameter dependence of the modulus
//!    |u₀| and a field scale `b` from the full complex derivative ∂u₀/∂p,
//!    with a ≥ b always. The associated Cramér-Rao limits are
//!    p_min = a·σ_P/(2√N) for photon counting and b·σ_P/(2√N) for field
//!    sensing, where σ_P² is the quadrature noise variance of the
//!    illumination (1 for coherent light, < 1 for squeezed light).
//!
//! 2. Which concrete measurement attains the limit? [`array_detection`]
//!    builds the weighted photodetector-array scheme whose optimal pixel
//!    gains follow the noise mode of the image, and [`homodyne`] builds the
//!    balanced homodyne scheme whose local oscillator is shaped like the
//!    signal mode. Both reach their respective bound at the optimal setting,
//!    which [`montecarlo`] verifies by simulating full photodetection
//!    records and comparing estimator spread against the closed forms.
//!
//! Images live on a [`transverse::TransverseGrid`]; parametrized mode
//! families are described by [`models::ImageModel`].

pub mod array_detection;
pub mod bounds;
pub mod homodyne;
pub mod models;
pub mod montecarlo;
pub mod rng;
pub mod transverse;

use thiserror::Error;

/// Library error type. Message text is part of the public contract for the
/// conditions spelled out in the module documentation.
#[derive(Debug, Error)]
pub enum Error {
    /// Two fields (or a field and a gain distribution) live on different grids.
    #[error("incompatible grids")]
    IncompatibleGrids,

    /// Normalization of a field with zero norm was requested.
    #[error("null field")]
    NullField,

    /// Grid construction parameters out of range.
    #[error("invalid grid: {0}")]
    InvalidGrid(&'static str),

    /// Illumination parameters out of range (N, σ_P², σ_Q², Heisenberg pair).
    #[error("invalid illumination: {0}")]
    InvalidIllumination(&'static str),

    /// Model construction parameters out of range.
    #[error("invalid model: {0}")]
    InvalidModel(&'static str),

    /// A model evaluator produced non-finite values or a badly
    /// non-normalized mode.
    #[error("model evaluation failed: {0}")]
    ModelEvaluation(String),

    /// Independent derivative evaluations (step refinement, or the phase
    /// scan against the analytic tuning angle) disagree.
    #[error("derivative unreliable: independent checks disagree by {0:.2e}")]
    DerivativeUnreliable(f64),

    /// ‖∂u₀/∂p‖² is numerically zero; the parameter leaves no trace.
    #[error("parameter not encoded")]
    ParameterNotEncoded,

    /// Modulus derivative vanishes; intensity detection carries no signal.
    #[error("no intensity noise-mode")]
    NoIntensityNoiseMode,

    /// Optimal-gain construction requested for a model with a = ∞.
    #[error("no intensity scheme exists")]
    NoIntensityScheme,

    /// Squeezed noise variance requested for a gain that is not proportional
    /// to the noise-mode gain.
    #[error("squeezed variance defined only for noise-mode-matched gain")]
    SqueezedGainMismatch,

    /// Squeezed local-oscillator noise requested while the LO mode does not
    /// match the signal mode.
    #[error("squeezing not mode-matched")]
    SqueezingNotModeMatched,

    /// A gain distribution whose first-order signal slope vanishes cannot be
    /// inverted into an estimate.
    #[error("gain insensitive to p")]
    GainInsensitiveToP,

    /// Local oscillator must dominate the image beam.
    #[error("local oscillator too weak: N_LO must be at least 100 N")]
    LocalOscillatorTooWeak,

    /// Homodyne configuration parameters out of range.
    #[error("invalid homodyne configuration: {0}")]
    InvalidHomodyne(&'static str),

    /// Empirical Fisher step outside the quadratic regime.
    #[error("p_step too large: step-halving estimates disagree by {0:.2}% (limit 5%)")]
    StepTooLarge(f64),

    /// Monte-Carlo request violates a precondition (trial count, grid size,
    /// photon budget, noise kind versus scheme).
    #[error("invalid monte carlo request: {0}")]
    InvalidMonteCarlo(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;
