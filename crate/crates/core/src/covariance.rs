//! Stationary kernels over the normalized grid distance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{Field, GridSpec};
use crate::linalg::SpdFactor;
use crate::rng::{standard_normals, substream};

/// Largest field dimension for which dense `n x n` covariances are built.
pub const DEFAULT_DENSE_CAP: usize = 8_192;

/// Relative diagonal jitter added before factoring a kernel covariance.
pub const KERNEL_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    /// `alpha * exp(-d^2 / r^2)`
    SquaredExponential,
    /// `alpha * exp(-d / r)`
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub scale: f64,
    pub range: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, scale: f64, range: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && range > 0.0 && range.is_finite()) {
            return Err(Error::validation(
                "kernel",
                format!("scale and range must be positive, got alpha={scale} r={range}"),
            ));
        }
        Ok(Self { family, scale, range })
    }

    /// Perturbation kernel for synthetic surveys: squared exponential,
    /// `alpha = 0.15`, `r = 0.07`.
    pub fn perturbation() -> Self {
        Self {
            family: KernelFamily::SquaredExponential,
            scale: 0.15,
            range: 0.07,
        }
    }

    /// Unit-scale Kriging prior shape `Q0`: exponential, `r = 0.75`.
    pub fn prior_shape() -> Self {
        Self {
            family: KernelFamily::Exponential,
            scale: 1.0,
            range: 0.75,
        }
    }

    pub fn eval(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::SquaredExponential => self.scale * (-(d * d) / (self.range * self.range)).exp(),
            KernelFamily::Exponential => self.scale * (-d / self.range).exp(),
        }
    }

    pub fn jitter(&self) -> f64 {
        KERNEL_JITTER * self.scale
    }
}

pub fn build_covariance(kernel: &KernelSpec, grid: &GridSpec) -> Result<DMatrix<f64>> {
    build_covariance_capped(kernel, grid, DEFAULT_DENSE_CAP)
}

pub fn build_covariance_capped(kernel: &KernelSpec, grid: &GridSpec, cap: usize) -> Result<DMatrix<f64>> {
    let n = grid.len();
    if n > cap {
        return Err(Error::Size { n, cap });
    }
    let coords: Vec<_> = grid.coords().collect();
    let mut c = DMatrix::zeros(n, n);
    for b in 0..n {
        c[(b, b)] = kernel.scale;
        for a in (b + 1)..n {
            let v = kernel.eval(grid.normalized_distance_unchecked(coords[a], coords[b]));
            c[(a, b)] = v;
            c[(b, a)] = v;
        }
    }
    Ok(c)
}

/// Draws `base + L u` with `L L^T = C + jitter I`.
#[derive(Debug, Clone)]
pub struct GaussianFieldSampler {
    grid: GridSpec,
    factor: SpdFactor,
}

impl GaussianFieldSampler {
    pub fn new(kernel: &KernelSpec, grid: &GridSpec) -> Result<Self> {
        let c = build_covariance(kernel, grid)?;
        Ok(Self {
            grid: *grid,
            factor: SpdFactor::with_jitter(c, kernel.jitter())?,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Zero-mean correlated perturbation.
    pub fn perturbation<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = standard_normals(rng, self.grid.len());
        self.factor.mul_lower(&u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, base: &Field, rng: &mut R) -> Result<Field> {
        if base.grid() != &self.grid {
            return Err(Error::validation("field", "grid differs from sampler grid"));
        }
        Field::new(self.grid, base.values() + self.perturbation(rng))
    }
}

/// `base + L u` for one seed; builds and factors the covariance each call.
pub fn sample_gaussian_field(base: &Field, kernel: &KernelSpec, seed: u64) -> Result<Field> {
    let sampler = GaussianFieldSampler::new(kernel, base.grid())?;
    sampler.sample(base, &mut substream(seed, "gaussian-field", 0))
}
