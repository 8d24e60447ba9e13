//! Linear-Gaussian posterior inference.
//!
//! With prior `X ~ N(mu, Q)`, `Q = 10^theta1 Q0`, and noise
//! `V ~ N(0, R)`, `R = 10^theta2 R0`, the posterior is Gaussian with
//!
//! ```text
//! gain        Lambda = (Q^-1 + H^T R^-1 H)^-1 H^T R^-1
//! mean        mu + Lambda (y - H mu)
//! covariance  (Q^-1 + H^T R^-1 H)^-1
//! ```
//!
//! The information-form quantities are evaluated through the prior factor
//! `Q = L L^T`: with `B = R^-1/2 H L` and `M = I + B^T B`,
//! `(Q^-1 + H^T R^-1 H)^-1 = L M^-1 L^T`. Only Cholesky solves are used.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::covariance::{build_covariance, KernelSpec};
use crate::error::{check_dim, Error, Result};
use crate::grid::{Field, GridSpec};
use crate::linalg::SpdFactor;
use crate::observation::ObservationModel;
use crate::realization::{gaussian_band, RealizationBatch};
use crate::rng::{standard_normals, substream, StreamRng};

/// Unit-scale prior covariance `Q0` and its factor, shared by every
/// `theta1`.
#[derive(Debug)]
pub struct PriorShape {
    q0: DMatrix<f64>,
    factor: SpdFactor,
    lower: DMatrix<f64>,
}

impl PriorShape {
    pub fn new(q0: DMatrix<f64>) -> Result<Self> {
        let factor = SpdFactor::new(q0.clone(), 0.0)?;
        let mut q0 = q0;
        for k in 0..q0.nrows() {
            q0[(k, k)] += factor.jitter();
        }
        let lower = factor.l();
        Ok(Self { q0, factor, lower })
    }

    pub fn from_kernel(kernel: &KernelSpec, grid: &GridSpec) -> Result<Self> {
        Self::new(build_covariance(kernel, grid)?)
    }

    /// The (possibly jittered) `Q0` that was factored.
    pub fn q0(&self) -> &DMatrix<f64> {
        &self.q0
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn order(&self) -> usize {
        self.q0.nrows()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theta {
    pub theta1: f64,
    pub theta2: f64,
}

impl Theta {
    pub const fn new(theta1: f64, theta2: f64) -> Self {
        Self { theta1, theta2 }
    }
}

/// `log10` scale applied to the base noise covariance `R0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseScaling(pub f64);

impl NoiseScaling {
    pub fn factor(self) -> f64 {
        10f64.powf(self.0)
    }
}

/// `X ~ N(mean, 10^theta1 Q0)`.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: Field,
    shape: Arc<PriorShape>,
    theta1: f64,
}

impl GaussianPrior {
    pub fn new(mean: Field, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim("prior covariance", mean.grid().len(), covariance.nrows())?;
        Self::with_shape(mean, Arc::new(PriorShape::new(covariance)?), 0.0)
    }

    pub fn with_shape(mean: Field, shape: Arc<PriorShape>, theta1: f64) -> Result<Self> {
        check_dim("prior covariance", mean.grid().len(), shape.order())?;
        if !theta1.is_finite() {
            return Err(Error::validation("prior", "theta1 must be finite"));
        }
        Ok(Self { mean, shape, theta1 })
    }

    pub fn mean(&self) -> &Field {
        &self.mean
    }

    pub fn grid(&self) -> &GridSpec {
        self.mean.grid()
    }

    pub fn shape(&self) -> &Arc<PriorShape> {
        &self.shape
    }

    pub fn theta1(&self) -> f64 {
        self.theta1
    }

    pub fn scale(&self) -> f64 {
        10f64.powf(self.theta1)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.shape.q0() * self.scale()
    }

    pub fn with_theta1(&self, theta1: f64) -> Self {
        Self { theta1, ..self.clone() }
    }

    pub fn with_mean(&self, mean: Field) -> Result<Self> {
        Self::with_shape(mean, self.shape.clone(), self.theta1)
    }

    /// Unconditional realization `mean + 10^(theta1/2) L0 u`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = standard_normals(rng, self.grid().len());
        self.mean.values() + self.shape.factor.mul_lower(&u) * self.scale().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorGaussian {
    pub mean: Field,
    pub covariance: DMatrix<f64>,
    pub gain: DMatrix<f64>,
}

impl PosteriorGaussian {
    pub fn std_dev(&self) -> DVector<f64> {
        self.covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }

    /// `mean +- z * std` for a central `level`.
    pub fn band(&self, level: f64) -> Result<(DVector<f64>, DVector<f64>)> {
        gaussian_band(self.mean.values(), &self.std_dev(), level)
    }
}

/// Posterior operator for one `(prior, model, theta2)`; independent of `y`.
#[derive(Debug, Clone)]
pub struct Kriging {
    prior: GaussianPrior,
    model: ObservationModel,
    noise: NoiseScaling,
    info_factor: SpdFactor,
    scaled_lower: DMatrix<f64>,
    gain: DMatrix<f64>,
}

impl Kriging {
    pub fn new(prior: &GaussianPrior, model: &ObservationModel, noise: NoiseScaling) -> Result<Self> {
        if prior.grid() != model.grid() {
            return Err(Error::validation("kriging", "prior and observation model grids differ"));
        }
        if !noise.0.is_finite() {
            return Err(Error::validation("kriging", "theta2 must be finite"));
        }
        let n = prior.grid().len();
        let m = model.m();
        let lower = prior.shape.lower() * prior.scale().sqrt();
        let inv_sd = model.scaled_noise_variances(noise.0).map(|v| 1.0 / v.sqrt());

        // B = R^-1/2 H L
        let mut b = model.h() * &lower;
        for (r, s) in inv_sd.iter().enumerate() {
            b.row_mut(r).scale_mut(*s);
        }
        let mut info = b.transpose() * &b;
        for k in 0..n {
            info[(k, k)] += 1.0;
        }
        let info_factor =
            SpdFactor::new(info, 0.0).map_err(|e| Error::Numeric(format!("information matrix I + B^T B: {e}")))?;

        // Lambda = L M^-1 B^T R^-1/2
        let mut bt_rs = b.transpose();
        for (c, s) in inv_sd.iter().enumerate() {
            bt_rs.column_mut(c).scale_mut(*s);
        }
        let gain = if m == 0 {
            DMatrix::zeros(n, 0)
        } else {
            &lower * info_factor.solve(&bt_rs)
        };

        Ok(Self {
            prior: prior.clone(),
            model: model.clone(),
            noise,
            info_factor,
            scaled_lower: lower,
            gain,
        })
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn model(&self) -> &ObservationModel {
        &self.model
    }

    pub fn noise(&self) -> NoiseScaling {
        self.noise
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }

    /// `mean + Lambda (y - H mean)` for an arbitrary prior mean.
    pub fn update(&self, mean: &DVector<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("measurement vector", self.model.m(), y.len())?;
        let innovation = y - self.model.apply(mean)?;
        Ok(mean + &self.gain * innovation)
    }

    pub fn posterior_mean(&self, y: &DVector<f64>) -> Result<Field> {
        Field::new(*self.prior.grid(), self.update(self.prior.mean.values(), y)?)
    }

    /// `L M^-1 L^T`, symmetrized.
    pub fn posterior_covariance(&self) -> DMatrix<f64> {
        let w = self.info_factor.solve_lower(&self.scaled_lower.transpose());
        let q = w.transpose() * &w;
        (&q + q.transpose()) * 0.5
    }

    pub fn posterior(&self, y: &DVector<f64>) -> Result<PosteriorGaussian> {
        Ok(PosteriorGaussian {
            mean: self.posterior_mean(y)?,
            covariance: self.posterior_covariance(),
            gain: self.gain.clone(),
        })
    }

    pub fn conditional_draw(&self, seed: u64, index: u64) -> (DVector<f64>, DVector<f64>) {
        conditional_draw(&self.prior, &self.model, self.noise, seed, index)
    }

    /// Conditional realization `x_u + Lambda (y + v - H x_u)`.
    pub fn bootstrap_realization(&self, y: &DVector<f64>, xu: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.update(xu, &(y + v))
    }

    pub fn sample_bootstrap(&self, y: &DVector<f64>, count: usize, seed: u64) -> Result<RealizationBatch> {
        check_dim("measurement vector", self.model.m(), y.len())?;
        let draws = (0..count)
            .into_par_iter()
            .map(|i| {
                let (xu, v) = self.conditional_draw(seed, i as u64);
                self.bootstrap_realization(y, &xu, &v)
            })
            .collect::<Result<Vec<_>>>()?;
        RealizationBatch::new(*self.prior.grid(), draws)
    }
}

/// Unconditional prior draw `x_u ~ N(mu, Q)` and measurement perturbation
/// `v ~ N(0, 10^theta2 R0)` for realization `index`, drawn in that order from
/// one substream. Every bootstrap-style sampler uses this so that draws match
/// across methods.
pub fn conditional_draw(
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
    seed: u64,
    index: u64,
) -> (DVector<f64>, DVector<f64>) {
    let mut rng: StreamRng = substream(seed, "conditional-draw", index);
    let xu = prior.sample(&mut rng);
    let v = model.draw_noise(&mut rng, noise.0);
    (xu, v)
}

/// Information-form gain.
pub fn compute_gain(prior: &GaussianPrior, model: &ObservationModel, noise: NoiseScaling) -> Result<DMatrix<f64>> {
    Ok(Kriging::new(prior, model, noise)?.gain)
}

/// Data-space gain `Q H^T (H Q H^T + R)^-1`, an independent route to the
/// same matrix.
pub fn compute_gain_data_space(
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
) -> Result<DMatrix<f64>> {
    let q = prior.covariance();
    let hq = model.h() * &q;
    let mut s = &hq * model.h().transpose();
    for (k, v) in model.scaled_noise_variances(noise.0).iter().enumerate() {
        s[(k, k)] += v;
    }
    let sf = SpdFactor::new(s, 0.0)?;
    Ok(sf.solve(&hq).transpose())
}

pub fn posterior_mean(
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
    y: &DVector<f64>,
) -> Result<Field> {
    Kriging::new(prior, model, noise)?.posterior_mean(y)
}

pub fn posterior_covariance(
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
) -> Result<DMatrix<f64>> {
    Ok(Kriging::new(prior, model, noise)?.posterior_covariance())
}

/// Marginal likelihood of `y` under the prior mean and shape, evaluated at
/// an explicit `theta` (the prior's own `theta1` is not used).
pub struct Evidence {
    hq0ht: DMatrix<f64>,
    r0: DVector<f64>,
    residual: DVector<f64>,
}

impl Evidence {
    pub fn new(prior: &GaussianPrior, model: &ObservationModel, y: &DVector<f64>) -> Result<Self> {
        check_dim("measurement vector", model.m(), y.len())?;
        let hq0 = model.h() * prior.shape.q0();
        Ok(Self {
            hq0ht: &hq0 * model.h().transpose(),
            r0: model.noise_variances().clone(),
            residual: y - model.apply(prior.mean.values())?,
        })
    }

    /// `log N(y; H mu, 10^theta1 H Q0 H^T + 10^theta2 R0)`.
    pub fn log_evidence(&self, theta: Theta) -> Result<f64> {
        let m = self.r0.len();
        let mut s = &self.hq0ht * 10f64.powf(theta.theta1);
        let noise = 10f64.powf(theta.theta2);
        for k in 0..m {
            s[(k, k)] += noise * self.r0[k];
        }
        let f = nalgebra::Cholesky::new(s).ok_or_else(|| {
            Error::Numeric(format!(
                "marginal covariance not positive definite at theta = ({}, {})",
                theta.theta1, theta.theta2
            ))
        })?;
        let white = f
            .l_dirty()
            .solve_lower_triangular(&self.residual)
            .expect("non-singular factor");
        let log_det: f64 = 2.0 * f.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(-0.5 * white.norm_squared() - 0.5 * log_det - 0.5 * m as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

pub fn log_evidence(prior: &GaussianPrior, model: &ObservationModel, theta: Theta, y: &DVector<f64>) -> Result<f64> {
    Evidence::new(prior, model, y)?.log_evidence(theta)
}

/// `{-2, -1.75, ..., 1}`.
pub fn default_theta_grid() -> Vec<f64> {
    (0..13).map(|k| -2.0 + 0.25 * k as f64).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub theta: Theta,
    pub log_evidence: f64,
    /// Every evaluated `(theta1, theta2, log evidence)`; failed evaluations
    /// are recorded as NaN.
    pub surface: Vec<(f64, f64, f64)>,
}

/// Maximize the evidence over the Cartesian grid. Ties go to the
/// lexicographically smallest `(theta1, theta2)`.
pub fn grid_search_theta(
    prior: &GaussianPrior,
    model: &ObservationModel,
    y: &DVector<f64>,
    grid_theta1: &[f64],
    grid_theta2: &[f64],
) -> Result<GridSearchResult> {
    let sorted = |g: &[f64], name: &'static str| -> Result<Vec<f64>> {
        if g.is_empty() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation(name, "grid must be non-empty and finite"));
        }
        let mut v = g.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        Ok(v)
    };
    let g1 = sorted(grid_theta1, "theta1 grid")?;
    let g2 = sorted(grid_theta2, "theta2 grid")?;
    let ev = Evidence::new(prior, model, y)?;
    let mut best: Option<(Theta, f64)> = None;
    let mut surface = Vec::with_capacity(g1.len() * g2.len());
    for &t1 in &g1 {
        for &t2 in &g2 {
            let theta = Theta::new(t1, t2);
            let value = ev.log_evidence(theta).unwrap_or(f64::NAN);
            surface.push((t1, t2, value));
            if value.is_finite() && best.is_none_or(|(_, b)| value > b) {
                best = Some((theta, value));
            }
        }
    }
    let (theta, log_evidence) = best.ok_or_else(|| Error::Numeric("every evidence evaluation failed".into()))?;
    Ok(GridSearchResult {
        theta,
        log_evidence,
        surface,
    })
}

/// Maximize the summed evidence of independent measurement vectors that
/// share one prior mean and shape. Same tie rule as [`grid_search_theta`].
pub fn grid_search_theta_multi(
    prior: &GaussianPrior,
    model: &ObservationModel,
    ys: &[DVector<f64>],
    grid_theta1: &[f64],
    grid_theta2: &[f64],
) -> Result<GridSearchResult> {
    if ys.is_empty() {
        return Err(Error::validation("evidence", "no measurement vectors"));
    }
    let mut per_y = ys
        .par_iter()
        .map(|y| grid_search_theta(prior, model, y, grid_theta1, grid_theta2).map(|r| r.surface))
        .collect::<Result<Vec<_>>>()?
        .into_iter();
    let mut surface = per_y.next().expect("non-empty");
    for other in per_y {
        for (acc, (_, _, v)) in surface.iter_mut().zip(other) {
            acc.2 += v;
        }
    }
    let mut best: Option<(Theta, f64)> = None;
    for &(t1, t2, value) in &surface {
        if value.is_finite() && best.is_none_or(|(_, b)| value > b) {
            best = Some((Theta::new(t1, t2), value));
        }
    }
    let (theta, log_evidence) = best.ok_or_else(|| Error::Numeric("every evidence evaluation failed".into()))?;
    Ok(GridSearchResult {
        theta,
        log_evidence,
        surface,
    })
}

/// `mean + L u_i` with `L` the Cholesky factor of the posterior covariance.
pub fn sample_posterior_cholesky(post: &PosteriorGaussian, count: usize, seed: u64) -> Result<RealizationBatch> {
    let grid = *post.mean.grid();
    if count == 0 {
        return Ok(RealizationBatch::empty(grid));
    }
    let factor = SpdFactor::new(post.covariance.clone(), 0.0)?;
    let draws: Vec<_> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "posterior-cholesky", i as u64);
            let u = standard_normals(&mut rng, grid.len());
            post.mean.values() + factor.mul_lower(&u)
        })
        .collect();
    RealizationBatch::new(grid, draws)
}

pub fn sample_posterior_bootstrap(
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
    y: &DVector<f64>,
    count: usize,
    seed: u64,
) -> Result<RealizationBatch> {
    Kriging::new(prior, model, noise)?.sample_bootstrap(y, count, seed)
}
