//! Discretized transverse plane: grids, complex mode fields, L² geometry.
//!
//! All physics in this crate happens in the plane transverse to beam
//! propagation. A [`TransverseGrid`] covers the square [−extent, extent]^dim
//! with uniform cells; mode functions are sampled at cell midpoints and
//! integrals are midpoint Riemann sums, ∫f d²r ≈ Σ_k f(r_k)·dA with
//! dA = spacing^dim. Cell midpoints are symmetric about the origin, so odd
//! integrands cancel exactly and parity arguments survive discretization.
//!
//! Mode functions carry units of length^(−dim/2): a normalized field
//! satisfies ∫|u|² d^dim r = 1 and |u|² is a probability density for photon
//! arrivals. Fields are immutable; every operation returns a new field.

use num_complex::Complex64;

use crate::{Error, Result};

/// Grids with fewer cells per axis than this under-resolve even the widest
/// Gaussian that fits the default extent.
pub const MIN_POINTS_PER_AXIS: u32 = 8;

/// Default half-width of the grid, in units of the model beam waist. Six
/// waists keep Gaussian tail truncation near e^{−72} ≈ 10⁻³², far below
/// every tolerance used in this crate.
pub const DEFAULT_EXTENT_WAISTS: f64 = 6.0;

/// Default resolution for one-dimensional grids.
pub const DEFAULT_POINTS_1D: u32 = 256;

/// Default resolution per axis for two-dimensional grids.
pub const DEFAULT_POINTS_2D: u32 = 128;

/// Number of transverse dimensions of a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    One,
    Two,
}

impl Dimension {
    pub fn as_u32(self) -> u32 {
        match self {
            Dimension::One => 1,
            Dimension::Two => 2,
        }
    }
}

/// Uniform midpoint grid on [−extent, extent]^dim.
///
/// The grid is a value type: two grids compare equal exactly when they
/// discretize the same region at the same resolution, and every field
/// operation requires operand grids to be equal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransverseGrid {
    dimension: Dimension,
    /// Half-width per axis (length units).
    extent: f64,
    points_per_axis: u32,
}

impl TransverseGrid {
    pub fn new(dimension: Dimension, extent: f64, points_per_axis: u32) -> Result<Self> {
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidGrid("extent must be positive and finite"));
        }
        if points_per_axis < MIN_POINTS_PER_AXIS {
            return Err(Error::InvalidGrid("points_per_axis must be at least 8"));
        }
        Ok(Self {
            dimension,
            extent,
            points_per_axis,
        })
    }

    pub fn line(extent: f64, points_per_axis: u32) -> Result<Self> {
        Self::new(Dimension::One, extent, points_per_axis)
    }

    pub fn plane(extent: f64, points_per_axis: u32) -> Result<Self> {
        Self::new(Dimension::Two, extent, points_per_axis)
    }

    /// Default 1D grid for a beam of the given waist: extent 6 waists,
    /// 256 points.
    pub fn default_line(waist: f64) -> Result<Self> {
        Self::line(DEFAULT_EXTENT_WAISTS * waist, DEFAULT_POINTS_1D)
    }

    /// Default 2D grid for a beam of the given waist: extent 6 waists,
    /// 128 points per axis.
    pub fn default_plane(waist: f64) -> Result<Self> {
        Self::plane(DEFAULT_EXTENT_WAISTS * waist, DEFAULT_POINTS_2D)
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn points_per_axis(&self) -> u32 {
        self.points_per_axis
    }

    /// Cell spacing along each axis.
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.points_per_axis as f64
    }

    /// Cell measure dA = spacing^dim.
    pub fn cell_measure(&self) -> f64 {
        match self.dimension {
            Dimension::One => self.spacing(),
            Dimension::Two => self.spacing() * self.spacing(),
        }
    }

    /// Total number of cells (points_per_axis^dim).
    pub fn num_cells(&self) -> usize {
        let n = self.points_per_axis as usize;
        match self.dimension {
            Dimension::One => n,
            Dimension::Two => n * n,
        }
    }

    /// Midpoint coordinate along one axis. Index pairs (i, n−1−i) map to
    /// exact floating-point negatives, so the grid is symmetric about the
    /// origin and odd sums cancel identically.
    pub fn axis_coord(&self, i: u32) -> f64 {
        (i as f64 + 0.5) * self.spacing() - self.extent
    }

    /// Midpoint of cell k in row-major order; the second coordinate is 0
    /// on one-dimensional grids.
    pub fn position(&self, k: usize) -> (f64, f64) {
        match self.dimension {
            Dimension::One => (self.axis_coord(k as u32), 0.0),
            Dimension::Two => {
                let n = self.points_per_axis as usize;
                let ix = (k % n) as u32;
                let iy = (k / n) as u32;
                (self.axis_coord(ix), self.axis_coord(iy))
            }
        }
    }

    /// Same region, twice the resolution per axis. Used by refinement checks.
    pub fn refined(&self) -> Self {
        Self {
            dimension: self.dimension,
            extent: self.extent,
            points_per_axis: 2 * self.points_per_axis,
        }
    }
}

/// Complex mode function sampled at the cell midpoints of one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TransverseGrid,
    values: Vec<Complex64>,
}

impl Field {
    /// Wraps sampled values; the length must match the grid cell count.
    pub fn new(grid: TransverseGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.num_cells() {
            return Err(Error::IncompatibleGrids);
        }
        Ok(Self { grid, values })
    }

    /// Samples a closure (x, y) → value at every cell midpoint.
    pub fn from_fn(grid: TransverseGrid, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = (0..grid.num_cells())
            .map(|k| {
                let (x, y) = grid.position(k);
                f(x, y)
            })
            .collect();
        Self { grid, values }
    }

    /// Samples a real-valued closure; imaginary parts are exactly zero.
    pub fn from_real_fn(grid: TransverseGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_fn(grid, |x, y| Complex64::new(f(x, y), 0.0))
    }

    pub fn grid(&self) -> &TransverseGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::IncompatibleGrids)
        }
    }

    /// L² inner product ⟨f, g⟩ = Σ_k conj(f_k)·g_k·dA, conjugate-linear in
    /// `self` and linear in `g`.
    pub fn inner_product(&self, g: &Field) -> Result<Complex64> {
        self.check_same_grid(g)?;
        let da = self.grid.cell_measure();
        let re = pairwise_sum_by(self.values.len(), |k| {
            let p = self.values[k].conj() * g.values[k];
            p.re
        });
        let im = pairwise_sum_by(self.values.len(), |k| {
            let p = self.values[k].conj() * g.values[k];
            p.im
        });
        Ok(Complex64::new(re * da, im * da))
    }

    /// Squared L² norm, Σ_k |f_k|²·dA. Always real and nonnegative.
    pub fn norm_sq(&self) -> f64 {
        let da = self.grid.cell_measure();
        pairwise_sum_by(self.values.len(), |k| self.values[k].norm_sqr()) * da
    }

    /// Returns f/‖f‖. A field with zero norm cannot be normalized.
    pub fn normalize(&self) -> Result<Field> {
        let n2 = self.norm_sq();
        if !(n2 > 0.0) {
            return Err(Error::NullField);
        }
        let inv = 1.0 / n2.sqrt();
        Ok(self.scaled(Complex64::new(inv, 0.0)))
    }

    /// Returns c·f on the same grid.
    pub fn scaled(&self, c: Complex64) -> Field {
        Field {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }

    /// Largest |f_k| over the grid.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// True when every imaginary part is exactly zero (fields built through
    /// [`Field::from_real_fn`] or modulus-derivative construction).
    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    /// L² distance ‖f − g‖.
    pub fn distance(&self, g: &Field) -> Result<f64> {
        self.check_same_grid(g)?;
        let da = self.grid.cell_measure();
        let s = pairwise_sum_by(self.values.len(), |k| {
            (self.values[k] - g.values[k]).norm_sqr()
        });
        Ok((s * da).sqrt())
    }
}

/// Pairwise (cascade) summation of f(0) + … + f(n−1). The fixed reduction
/// tree keeps the result independent of how callers partition work, and the
/// O(log n) error growth keeps 10⁻¹²-level reproducibility contracts honest.
pub(crate) fn pairwise_sum_by(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, f: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= 64 {
            let mut acc = 0.0;
            for k in lo..hi {
                acc += f(k);
            }
            acc
        } else {
            let mid = lo + (hi - lo) / 2;
            go(lo, mid, f) + go(mid, hi, f)
        }
    }
    go(0, n, &f)
}
