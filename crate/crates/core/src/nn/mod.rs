//! Fully connected posterior-mean network: forward pass, backpropagation,
//! Adam training, checkpoints and the network-driven bootstrap sampler.

mod adam;
mod checkpoint;
mod mlp;
mod normalize;
mod train;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint};
pub use mlp::{Activation, Gradient, Layer, MlpArchitecture, MlpParameters};
pub use normalize::Normalization;
pub use train::{loss_history_csv, train, train_on, TrainConfig, TrainOutcome};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{check_dim, Result};
use crate::estimator::PosteriorMeanEstimator;
use crate::kriging::{conditional_draw, GaussianPrior, NoiseScaling};
use crate::observation::ObservationModel;
use crate::realization::RealizationBatch;

/// Hidden widths of the full-size network.
pub const PAPER_HIDDEN: [usize; 2] = [2000, 2000];
/// Hidden widths of the desk-scale preset.
pub const DESK_HIDDEN: [usize; 2] = [256, 256];

/// A network together with the normalization it was trained under; maps
/// raw measurements to a field in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpEstimator {
    pub params: MlpParameters,
    pub norm: Normalization,
}

impl MlpEstimator {
    pub fn architecture(&self) -> &MlpArchitecture {
        self.params.architecture()
    }
}

impl PosteriorMeanEstimator for MlpEstimator {
    fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        let ys = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
        Ok(self.estimate_batch(&ys)?.column(0).into_owned())
    }

    fn estimate_batch(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let x = self.norm.normalize_inputs(ys)?;
        let out = self.params.forward_batch(&x)?;
        self.norm.denormalize_outputs(&out)
    }
}

/// Realization `x_u - mu + tau(y + v - H (x_u - mu))` for one matched draw.
pub fn dnn_bootstrap_realization<E: PosteriorMeanEstimator + ?Sized>(
    estimator: &E,
    prior: &GaussianPrior,
    model: &ObservationModel,
    y: &DVector<f64>,
    xu: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let dev = xu - prior.mean().values();
    let input = y + v - model.apply(&dev)?;
    Ok(dev + estimator.estimate(&input)?)
}

/// Conditional realizations driven by a posterior-mean estimator. Draw `i`
/// uses the same `(x_u, v)` as the Kriging bootstrap with the same seed.
pub fn sample_posterior_dnn<E: PosteriorMeanEstimator + ?Sized>(
    estimator: &E,
    prior: &GaussianPrior,
    model: &ObservationModel,
    noise: NoiseScaling,
    y: &DVector<f64>,
    count: usize,
    seed: u64,
) -> Result<RealizationBatch> {
    check_dim("measurement vector", model.m(), y.len())?;
    let draws = (0..count)
        .into_par_iter()
        .map(|i| {
            let (xu, v) = conditional_draw(prior, model, noise, seed, i as u64);
            dnn_bootstrap_realization(estimator, prior, model, y, &xu, &v)
        })
        .collect::<Result<Vec<_>>>()?;
    RealizationBatch::new(*prior.grid(), draws)
}
