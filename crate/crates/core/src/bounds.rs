//! Sensitivity scales, Fisher information, and Cramér-Rao limits.
//!
//! For a normalized family u₀(r, p) carrying N photons, two L² norms of the
//! parameter derivative set every limit in this crate:
//!
//! * intensity scale: 1/a² = ∫ (∂|u₀|/∂p)² d^dim r. Photon counting sees
//!   only the modulus, so a diverges for pure phase encodings.
//! * field scale: 1/b² = ∫ |∂u₀/∂p|² d^dim r. Field-sensitive detection
//!   sees the whole derivative, so b ≤ a always.
//!
//! Photon counting with ideal pixels has Fisher information
//! I_F = ∫ (∂n̄/∂p)²/n̄ − ∂²n̄/∂p² d^dim r = 4N/a² for the mean photon
//! density n̄ = N|u₀|²; the curvature term integrates to zero because N does
//! not depend on p. Field sensing on light with amplitude-quadrature noise
//! σ_P² reaches I_F = 4N/(b²σ_P²). The corresponding smallest resolvable
//! parameters at unit signal-to-noise are
//!
//! * p_min = a·σ_P/(2√N) for intensity detection,
//! * p_min = b·σ_P/(2√N) for field detection,
//!
//! which [`crate::array_detection`] and [`crate::homodyne`] attain with the
//! noise mode u_I ∝ ∂|u₀|/∂p and the signal mode u_E ∝ ∂u₀/∂p computed
//! here.

use num_complex::Complex64;

use crate::models::{ImageModel, Illumination, MODULUS_FLOOR_FACTOR};
use crate::transverse::{pairwise_sum_by, Field, TransverseGrid};
use crate::{Error, Result};

/// Below this squared derivative norm the parameter is treated as absent
/// (a → ∞ for the modulus route, an error for the field route).
pub const DERIVATIVE_NORM_FLOOR: f64 = 1e-12;

/// Cells with mean density below this fraction of N are excluded from the
/// (∂n̄/∂p)²/n̄ quotient; their true contribution is bounded by the same
/// fraction of the total.
pub const DARK_CELL_FRACTION: f64 = 1e-30;

/// Step for the density differences in the Fisher integral, as a fraction
/// of p_scale. Coarser than the derivative-check step on purpose: the
/// integral forms a second difference, and dividing rounding noise by h²
/// punishes very small steps far more than O(h²) truncation does.
pub const INTEGRAL_STEP_FACTOR: f64 = 1e-2;

/// Intensity sensitivity scale a: 1/a² = ‖∂|u₀|/∂p‖².
///
/// Returns +∞ when the modulus derivative norm is numerically zero, the
/// sentinel for parameters that photon counting cannot see.
pub fn compute_a(model: &ImageModel, grid: &TransverseGrid) -> Result<f64> {
    let md = model.modulus_derivative(grid)?;
    let n2 = md.norm_sq();
    if n2 < DERIVATIVE_NORM_FLOOR {
        Ok(f64::INFINITY)
    } else {
        Ok(1.0 / n2.sqrt())
    }
}

/// Field sensitivity scale b: 1/b² = ‖∂u₀/∂p‖².
pub fn compute_b(model: &ImageModel, grid: &TransverseGrid) -> Result<f64> {
    let d = model.mode_derivative(grid)?;
    let n2 = d.norm_sq();
    if n2 < DERIVATIVE_NORM_FLOOR {
        Err(Error::ParameterNotEncoded)
    } else {
        Ok(1.0 / n2.sqrt())
    }
}

/// Noise mode of intensity detection, u_I = a·∂|u₀|/∂p: the normalized real
/// mode along which the parameter moves the photon distribution.
pub fn noise_mode(model: &ImageModel, grid: &TransverseGrid) -> Result<Field> {
    let md = model.modulus_derivative(grid)?;
    if md.norm_sq() < DERIVATIVE_NORM_FLOOR {
        return Err(Error::NoIntensityNoiseMode);
    }
    md.normalize()
}

/// Signal mode of field detection, u_E = b·∂u₀/∂p: the normalized complex
/// mode in which the whole first-order response of the field lives.
pub fn signal_mode(model: &ImageModel, grid: &TransverseGrid) -> Result<Field> {
    let d = model.mode_derivative(grid)?;
    if d.norm_sq() < DERIVATIVE_NORM_FLOOR {
        return Err(Error::ParameterNotEncoded);
    }
    d.normalize()
}

/// The two pieces of the photon-counting Fisher integral.
#[derive(Clone, Copy, Debug)]
pub struct PoissonFisherParts {
    /// ∫ (∂n̄/∂p)²/n̄ d^dim r over cells above the dark floor.
    pub quotient_term: f64,
    /// ∫ ∂²n̄/∂p² d^dim r; vanishes for any family with p-independent N.
    pub curvature_term: f64,
}

impl PoissonFisherParts {
    pub fn value(&self) -> f64 {
        (self.quotient_term - self.curvature_term).max(0.0)
    }
}

/// Photon-counting Fisher information evaluated directly from the density
/// n̄(r, p) = N|u₀(r, p)|² with central differences in p.
pub fn fisher_poisson_integral_parts(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
) -> Result<PoissonFisherParts> {
    let h = INTEGRAL_STEP_FACTOR * model.p_scale();
    let u0 = model.mode_field(grid, 0.0)?;
    let up = model.mode_field(grid, h)?;
    let um = model.mode_field(grid, -h)?;
    let da = grid.cell_measure();

    let n = u0.len();
    let density =
        |f: &Field, k: usize| -> f64 { photons * f.values()[k].norm_sqr() };

    let quotient = pairwise_sum_by(n, |k| {
        let n0 = density(&u0, k);
        if n0 < DARK_CELL_FRACTION * photons {
            return 0.0;
        }
        let slope = (density(&up, k) - density(&um, k)) / (2.0 * h);
        slope * slope / n0
    }) * da;

    let curvature = pairwise_sum_by(n, |k| {
        (density(&up, k) - 2.0 * density(&u0, k) + density(&um, k)) / (h * h)
    }) * da;

    Ok(PoissonFisherParts {
        quotient_term: quotient,
        curvature_term: curvature,
    })
}

/// Convenience wrapper returning the full integral.
pub fn fisher_poisson_integral(
    model: &ImageModel,
    grid: &TransverseGrid,
    photons: f64,
) -> Result<f64> {
    Ok(fisher_poisson_integral_parts(model, grid, photons)?.value())
}

/// Closed-form photon-counting Fisher information 4N/a²; zero when a = ∞.
pub fn fisher_poisson(a: f64, photons: f64) -> f64 {
    if a.is_infinite() {
        0.0
    } else {
        4.0 * photons / (a * a)
    }
}

/// Field-measurement Fisher information for Gaussian quadrature noise.
///
/// In the gauge where the mean field is locally real, the in-phase part of
/// the derivative is read against σ_P² and the quadrature part against
/// σ_Q²:
///
/// I_F = 4N·( ‖Re(e^{−iφ₀}∂u₀/∂p)‖²/σ_P² + ‖Im(e^{−iφ₀}∂u₀/∂p)‖²/σ_Q² )
///
/// with φ₀(r) the local phase of u₀(r, 0). This reduces to 4N/(b²σ_P²)
/// whenever the derivative is everywhere in phase with the mean field, or
/// when σ_P = σ_Q.
pub fn fisher_gauss(
    model: &ImageModel,
    grid: &TransverseGrid,
    illumination: &Illumination,
) -> Result<f64> {
    let u0 = model.mode_field(grid, 0.0)?;
    let d = model.mode_derivative(grid)?;
    let floor = MODULUS_FLOOR_FACTOR * u0.max_abs();
    let da = grid.cell_measure();
    let n = u0.len();

    let rotated = |k: usize| -> Complex64 {
        let v = u0.values()[k];
        let m = v.norm();
        if m >= floor {
            // conj(phase)·d removes the local mean-field phase.
            (v.conj() / m) * d.values()[k]
        } else {
            d.values()[k]
        }
    };
    let in_phase = pairwise_sum_by(n, |k| {
        let r = rotated(k).re;
        r * r
    }) * da;
    let quadrature = pairwise_sum_by(n, |k| {
        let r = rotated(k).im;
        r * r
    }) * da;

    Ok(4.0 * illumination.photons()
        * (in_phase / illumination.sigma_p2() + quadrature / illumination.sigma_q2()))
}

/// Everything the bounds of a (model, grid, illumination) triple say at once.
#[derive(Clone, Debug)]
pub struct SensitivitySummary {
    /// Intensity sensitivity scale; +∞ for pure phase encodings.
    pub a: f64,
    /// Field sensitivity scale; a ≥ b always.
    pub b: f64,
    /// u_I, absent when a = ∞.
    pub noise_mode: Option<Field>,
    /// u_E.
    pub signal_mode: Field,
    /// 4N/a².
    pub fisher_poisson: f64,
    /// General two-quadrature Gaussian Fisher information.
    pub fisher_gauss: f64,
    /// a·σ_P/(2√N).
    pub crb_intensity: f64,
    /// b·σ_P/(2√N).
    pub crb_field: f64,
}

impl SensitivitySummary {
    pub fn compute(
        model: &ImageModel,
        grid: &TransverseGrid,
        illumination: &Illumination,
    ) -> Result<Self> {
        let a = compute_a(model, grid)?;
        let b = compute_b(model, grid)?;
        let noise = if a.is_infinite() {
            None
        } else {
            Some(noise_mode(model, grid)?)
        };
        let signal = signal_mode(model, grid)?;
        let photons = illumination.photons();
        let sigma_p = illumination.sigma_p();
        let half_shot = 2.0 * photons.sqrt();
        Ok(Self {
            a,
            b,
            noise_mode: noise,
            signal_mode: signal,
            fisher_poisson: fisher_poisson(a, photons),
            fisher_gauss: fisher_gauss(model, grid, illumination)?,
            crb_intensity: a * sigma_p / half_shot,
            crb_field: b * sigma_p / half_shot,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::DerivativeMode;
    use crate::transverse::Dimension;

    fn rel(x: f64, expect: f64) -> f64 {
        (x - expect).abs() / expect.abs()
    }

    #[test]
    fn displacement_scales_equal_waist() {
        for w in [0.5, 1.0, 2.0] {
            let model = ImageModel::displaced_gaussian(w).unwrap();
            let grid = TransverseGrid::default_line(w).unwrap();
            let a = compute_a(&model, &grid).unwrap();
            let b = compute_b(&model, &grid).unwrap();
            assert!(rel(a, w) < 1e-5, "a at w={w}: {a}");
            assert!(rel(b, w) < 1e-5, "b at w={w}: {b}");
            assert!(a >= b * (1.0 - 1e-9));
        }
    }

    #[test]
    fn breathing_waist_scales_are_sqrt_two() {
        // ‖u₀·(2x²/w² − 1/2)‖² = 1/2 from Gaussian moments ⟨x²⟩ = w²/4,
        // ⟨x⁴⟩ = 3w⁴/16.
        for w in [1.0, 2.0] {
            let model = ImageModel::waist_scaled_gaussian(w).unwrap();
            let grid = TransverseGrid::default_line(w).unwrap();
            let expect = std::f64::consts::SQRT_2;
            assert!(rel(compute_a(&model, &grid).unwrap(), expect) < 1e-8);
            assert!(rel(compute_b(&model, &grid).unwrap(), expect) < 1e-8);
        }
    }

    #[test]
    fn phase_tilt_is_invisible_to_intensity_but_not_field() {
        let model = ImageModel::phase_tilt(1.0, 1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        assert!(compute_a(&model, &grid).unwrap().is_infinite());
        assert!(rel(compute_b(&model, &grid).unwrap(), 2.0) < 1e-5);

        let steep = ImageModel::phase_tilt(2.0, 3.0).unwrap();
        let grid2 = TransverseGrid::default_line(2.0).unwrap();
        let b = compute_b(&steep, &grid2).unwrap();
        assert!(rel(b, 2.0 / (3.0 * 2.0)) < 1e-5);
    }

    #[test]
    fn noise_mode_is_first_hermite_gauss() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let u_i = noise_mode(&model, &grid).unwrap();
        assert!((u_i.norm_sq() - 1.0).abs() < 1e-9);
        let u0 = model.mode_field(&grid, 0.0).unwrap();
        for (k, v) in u_i.values().iter().enumerate() {
            let (x, _) = grid.position(k);
            assert!((v.re - 2.0 * x * u0.values()[k].re).abs() < 1e-5);
        }
        let overlap = u0.inner_product(&u_i).unwrap();
        assert!(overlap.norm() < 1e-6);
    }

    #[test]
    fn signal_mode_of_phase_tilt_carries_phase_i() {
        let model = ImageModel::phase_tilt(1.0, 2.5).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let u_e = signal_mode(&model, &grid).unwrap();
        assert!((u_e.norm_sq() - 1.0).abs() < 1e-9);
        let u0 = model.mode_field(&grid, 0.0).unwrap();
        // κ cancels under normalization: u_E = i·(2x/w)·u₀ for every κ.
        for (k, v) in u_e.values().iter().enumerate() {
            let (x, _) = grid.position(k);
            assert!((v.im - 2.0 * x * u0.values()[k].re).abs() < 1e-5);
            assert!(v.re.abs() < 1e-12);
        }
        let overlap = u0.inner_product(&u_e).unwrap();
        assert!(overlap.re.abs() < 1e-6);
    }

    #[test]
    fn breathing_waist_noise_mode_is_even_and_orthogonal() {
        let model = ImageModel::waist_scaled_gaussian(1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let u_i = noise_mode(&model, &grid).unwrap();
        let n = grid.num_cells();
        for k in 0..n {
            let v = u_i.values()[k].re;
            let mirrored = u_i.values()[n - 1 - k].re;
            assert!((v - mirrored).abs() < 1e-12);
        }
        let u0 = model.mode_field(&grid, 0.0).unwrap();
        assert!(u0.inner_product(&u_i).unwrap().norm() < 1e-6);
    }

    #[test]
    fn fisher_integral_matches_closed_form() {
        let photons = 1e4;
        let cases = [
            ImageModel::displaced_gaussian(1.0).unwrap(),
            ImageModel::displaced_gaussian(0.5).unwrap(),
            ImageModel::waist_scaled_gaussian(1.0).unwrap(),
        ];
        for model in cases {
            let grid = TransverseGrid::default_line(model.p_scale() * 10.0).unwrap();
            let integral = fisher_poisson_integral(&model, &grid, photons).unwrap();
            let a = compute_a(&model, &grid).unwrap();
            let closed = fisher_poisson(a, photons);
            assert!(
                rel(integral, closed) < 1e-3,
                "{}: {integral} vs {closed}",
                model.name()
            );
        }
    }

    #[test]
    fn fisher_integral_curvature_term_vanishes() {
        let photons = 1e4;
        let models = [
            ImageModel::displaced_gaussian(1.0).unwrap(),
            ImageModel::waist_scaled_gaussian(1.0).unwrap(),
            ImageModel::phase_tilt(1.0, 1.0).unwrap(),
        ];
        for model in models {
            let grid = TransverseGrid::default_line(1.0).unwrap();
            let parts = fisher_poisson_integral_parts(&model, &grid, photons).unwrap();
            assert!(
                parts.curvature_term.abs() < 1e-6 * photons,
                "{}: {}",
                model.name(),
                parts.curvature_term
            );
        }
    }

    #[test]
    fn fisher_integral_of_phase_tilt_is_zero() {
        let model = ImageModel::phase_tilt(1.0, 1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let photons = 1e4;
        let integral = fisher_poisson_integral(&model, &grid, photons).unwrap();
        assert!(integral.abs() < 1e-6 * photons);
    }

    #[test]
    fn closed_form_fisher_poisson_handles_sentinel() {
        assert_eq!(fisher_poisson(1.0, 1e6), 4e6);
        assert_eq!(fisher_poisson(f64::INFINITY, 1e6), 0.0);
        assert!(rel(fisher_poisson(2.0, 1e4), 1e4) < 1e-12);
    }

    #[test]
    fn gaussian_fisher_scales_with_quadrature_noise() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let coherent = Illumination::coherent(1e4).unwrap();
        let squeezed = Illumination::new(1e4, 0.5, 2.0).unwrap();
        let f_coh = fisher_gauss(&model, &grid, &coherent).unwrap();
        let f_sq = fisher_gauss(&model, &grid, &squeezed).unwrap();
        assert!(rel(f_coh, 4e4) < 1e-3);
        assert!(rel(f_sq, 8e4) < 1e-3);
    }

    #[test]
    fn gaussian_fisher_reduces_to_closed_form() {
        // In-phase derivative with σ_P ≠ σ_Q, and fully quadrature-shifted
        // derivative with σ_P = σ_Q: both must collapse to 4N/(b²σ_P²).
        let cases = [
            (
                ImageModel::displaced_gaussian(1.0).unwrap(),
                Illumination::new(1e4, 0.25, 4.0).unwrap(),
            ),
            (
                ImageModel::phase_tilt(1.0, 1.0).unwrap(),
                Illumination::coherent(1e4).unwrap(),
            ),
        ];
        for (model, illum) in cases {
            let grid = TransverseGrid::default_line(1.0).unwrap();
            let b = compute_b(&model, &grid).unwrap();
            let closed = 4.0 * illum.photons() / (b * b * illum.sigma_p2());
            let general = fisher_gauss(&model, &grid, &illum).unwrap();
            assert!(rel(general, closed) < 1e-9, "{}", model.name());
        }
    }

    #[test]
    fn phase_tilt_gaussian_fisher_example() {
        let model = ImageModel::phase_tilt(1.0, 1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let illum = Illumination::coherent(1e4).unwrap();
        assert!(rel(fisher_gauss(&model, &grid, &illum).unwrap(), 1e4) < 1e-3);
    }

    #[test]
    fn summary_closed_forms_are_consistent() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let coherent = Illumination::coherent(1e6).unwrap();
        let s = SensitivitySummary::compute(&model, &grid, &coherent).unwrap();
        assert!(rel(s.crb_intensity, 5e-4) < 1e-5);
        assert!(rel(s.crb_field, 5e-4) < 1e-5);
        assert!(rel(s.crb_intensity, s.a * 1.0 / (2.0 * 1e3)) < 1e-12);
        assert!(rel(s.crb_field, 1.0 / s.fisher_gauss.sqrt()) < 1e-9);
        assert!(s.noise_mode.is_some());

        let squeezed = Illumination::new(1e6, 0.25, 4.0).unwrap();
        let ss = SensitivitySummary::compute(&model, &grid, &squeezed).unwrap();
        assert!(rel(ss.crb_intensity, 2.5e-4) < 1e-5);
        assert!(rel(ss.crb_field, 2.5e-4) < 1e-5);
    }

    #[test]
    fn summary_of_phase_tilt_has_infinite_intensity_limit() {
        let model = ImageModel::phase_tilt(1.0, 1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let illum = Illumination::coherent(1e6).unwrap();
        let s = SensitivitySummary::compute(&model, &grid, &illum).unwrap();
        assert!(s.a.is_infinite());
        assert!(s.crb_intensity.is_infinite());
        assert_eq!(s.fisher_poisson, 0.0);
        assert!(s.noise_mode.is_none());
        assert!(rel(s.crb_field, 2.0 / (2.0 * 1e3)) < 1e-5);
    }

    #[test]
    fn fisher_is_linear_in_photon_number() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        let a = compute_a(&model, &grid).unwrap();
        let f2 = fisher_poisson(a, 1e2);
        let f4 = fisher_poisson(a, 1e4);
        let f6 = fisher_poisson(a, 1e6);
        assert!(rel(f4 / f2, 1e2) < 1e-12);
        assert!(rel(f6 / f4, 1e2) < 1e-12);
    }

    #[test]
    fn scales_are_stable_under_grid_refinement() {
        let models = [
            ImageModel::displaced_gaussian(1.0).unwrap(),
            ImageModel::waist_scaled_gaussian(1.0).unwrap(),
            ImageModel::phase_tilt(1.0, 1.0).unwrap(),
        ];
        for model in models {
            let grid = TransverseGrid::default_line(1.0).unwrap();
            let fine = grid.refined();
            let b0 = compute_b(&model, &grid).unwrap();
            let b1 = compute_b(&model, &fine).unwrap();
            assert!(rel(b0, b1) < 1e-6, "{}", model.name());
            let a0 = compute_a(&model, &grid).unwrap();
            let a1 = compute_a(&model, &fine).unwrap();
            if a0.is_finite() {
                assert!(rel(a0, a1) < 1e-6, "{}", model.name());
            } else {
                assert!(a1.is_infinite());
            }
        }
    }

    #[test]
    fn constant_family_is_not_encoded() {
        let model = ImageModel::custom("flat", 0.1, |grid, _| {
            (0..grid.num_cells())
                .map(|k| {
                    let (x, _) = grid.position(k);
                    Complex64::new((-x * x).exp(), 0.0)
                })
                .collect()
        })
        .unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        assert!(matches!(
            compute_b(&model, &grid),
            Err(Error::ParameterNotEncoded)
        ));
        assert!(matches!(
            signal_mode(&model, &grid),
            Err(Error::ParameterNotEncoded)
        ));
        assert!(compute_a(&model, &grid).unwrap().is_infinite());
        assert!(matches!(
            noise_mode(&model, &grid),
            Err(Error::NoIntensityNoiseMode)
        ));
    }

    #[test]
    fn finite_difference_route_reproduces_scales() {
        let model = ImageModel::displaced_gaussian(1.0)
            .unwrap()
            .with_derivative_mode(DerivativeMode::FiniteDifference)
            .unwrap();
        let grid = TransverseGrid::default_line(1.0).unwrap();
        assert!(rel(compute_a(&model, &grid).unwrap(), 1.0) < 1e-5);
        assert!(rel(compute_b(&model, &grid).unwrap(), 1.0) < 1e-5);
    }

    #[test]
    fn two_dimensional_scales_match_one_dimensional() {
        let model = ImageModel::displaced_gaussian(1.0).unwrap();
        let grid = TransverseGrid::new(Dimension::Two, 6.0, 128).unwrap();
        assert!(rel(compute_a(&model, &grid).unwrap(), 1.0) < 1e-5);
        assert!(rel(compute_b(&model, &grid).unwrap(), 1.0) < 1e-5);
    }
}
