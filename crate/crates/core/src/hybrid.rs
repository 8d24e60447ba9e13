//! Network prediction used as a data-informed prior mean inside the Kriging
//! update: `tau(y) + Lambda (y - H tau(y))`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Result};
use crate::estimator::PosteriorMeanEstimator;
use crate::grid::Field;
use crate::kriging::{grid_search_theta, GaussianPrior, Kriging, NoiseScaling, Theta};
use crate::linalg::SpdFactor;
use crate::observation::ObservationModel;
use crate::realization::RealizationBatch;
use crate::rng::{standard_normals, substream};

#[derive(Debug, Clone)]
pub struct HybridResult {
    pub dnn_mean: Field,
    pub corrected_mean: Field,
    pub posterior_covariance: Arc<DMatrix<f64>>,
    /// Hyper-parameters of the Kriging step.
    pub theta: Theta,
}

impl HybridResult {
    pub fn std_dev(&self) -> DVector<f64> {
        self.posterior_covariance.diagonal().map(|v| v.max(0.0).sqrt())
    }
}

/// Apply the Kriging update to an already computed network prediction.
pub fn correct_prediction(kriging: &Kriging, dnn_mean: Field, y: &DVector<f64>) -> Result<HybridResult> {
    check_dim(
        "network prediction",
        kriging.prior().grid().len(),
        dnn_mean.values().len(),
    )?;
    let corrected = kriging.update(dnn_mean.values(), y)?;
    Ok(HybridResult {
        corrected_mean: Field::new(*dnn_mean.grid(), corrected)?,
        dnn_mean,
        posterior_covariance: Arc::new(kriging.posterior_covariance()),
        theta: Theta::new(kriging.prior().theta1(), kriging.noise().0),
    })
}

pub fn dnn_kriging<E: PosteriorMeanEstimator + ?Sized>(
    estimator: &E,
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
    y: &DVector<f64>,
) -> Result<HybridResult> {
    let kriging = Kriging::new(prior, model, noise)?;
    let dnn_mean = Field::new(*prior.grid(), estimator.estimate(y)?)?;
    correct_prediction(&kriging, dnn_mean, y)
}

/// Variant that re-selects `(theta1, theta2)` by evidence maximization with
/// the network prediction as the prior mean of the residual.
pub fn dnn_kriging_reestimated<E: PosteriorMeanEstimator + ?Sized>(
    estimator: &E,
    prior: &GaussianPrior,
    model: &ObservationModel,
    y: &DVector<f64>,
    grid_theta1: &[f64],
    grid_theta2: &[f64],
) -> Result<HybridResult> {
    let dnn_mean = Field::new(*prior.grid(), estimator.estimate(y)?)?;
    let residual_prior = prior.with_mean(dnn_mean.clone())?;
    let fit = grid_search_theta(&residual_prior, model, y, grid_theta1, grid_theta2)?;
    let kriging = Kriging::new(
        &prior.with_theta1(fit.theta.theta1),
        model,
        NoiseScaling(fit.theta.theta2),
    )?;
    correct_prediction(&kriging, dnn_mean, y)
}

/// `corrected_mean + L u_i` with `L L^T` the posterior covariance.
pub fn sample_hybrid(result: &HybridResult, count: usize, seed: u64) -> Result<RealizationBatch> {
    let grid = *result.corrected_mean.grid();
    if count == 0 {
        return Ok(RealizationBatch::empty(grid));
    }
    let factor = SpdFactor::new((*result.posterior_covariance).clone(), 0.0)?;
    let draws: Vec<_> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, "hybrid-cholesky", i as u64);
            let u = standard_normals(&mut rng, grid.len());
            result.corrected_mean.values() + factor.mul_lower(&u)
        })
        .collect();
    RealizationBatch::new(grid, draws)
}
