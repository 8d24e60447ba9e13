use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::adam::{Adam, AdamConfig};
use super::mlp::{MlpArchitecture, MlpParameters};
use super::normalize::Normalization;
use super::MlpEstimator;
use crate::error::{check_dim, Error, Result};
use crate::rng::substream;
use crate::synthetic::TrainingDataset;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    /// Final learning rate as a fraction of the initial one, reached by
    /// cosine annealing over all epochs. 1.0 keeps the rate constant.
    pub final_lr_fraction: f64,
    pub seed: u64,
    /// Standardize inputs and shift/scale targets before training.
    pub normalize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 64,
            epochs: 50,
            final_lr_fraction: 1.0,
            seed: 0,
            normalize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adam.learning_rate > 0.0 && self.adam.learning_rate.is_finite()) {
            return Err(Error::validation("learning rate", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("batch size", "must be at least 1"));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::validation("final learning-rate fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }

    fn learning_rate(&self, epoch: usize) -> f64 {
        let lr = self.adam.learning_rate;
        if self.final_lr_fraction >= 1.0 || self.epochs <= 1 {
            return lr;
        }
        let t = epoch as f64 / (self.epochs - 1) as f64;
        let lo = lr * self.final_lr_fraction;
        lo + 0.5 * (lr - lo) * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub estimator: MlpEstimator,
    /// Mean training loss of each epoch, in normalized units.
    pub loss_history: Vec<f64>,
}

pub fn train(
    dataset: &TrainingDataset,
    arch: &MlpArchitecture,
    config: &TrainConfig,
    target_shift: Option<&DVector<f64>>,
) -> Result<TrainOutcome> {
    train_on(&dataset.inputs, &dataset.targets, arch, config, target_shift)
}

/// Mini-batch Adam on column-wise pairs. Initialization draws from the
/// `mlp-init` stream and each epoch's shuffle from `mlp-shuffle`, so the run
/// is a pure function of the data and the config.
pub fn train_on(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    arch: &MlpArchitecture,
    config: &TrainConfig,
    target_shift: Option<&DVector<f64>>,
) -> Result<TrainOutcome> {
    config.validate()?;
    check_dim("training inputs", arch.input_dim, inputs.nrows())?;
    check_dim("training targets", arch.output_dim, targets.nrows())?;
    check_dim("training pairs", inputs.ncols(), targets.ncols())?;
    if inputs.ncols() == 0 {
        return Err(Error::validation("training data", "no samples"));
    }

    let norm = if config.normalize {
        Normalization::fit(inputs, targets, target_shift)?
    } else {
        Normalization::identity(arch.input_dim, arch.output_dim)
    };
    let x = norm.normalize_inputs(inputs)?;
    let t = norm.normalize_targets(targets)?;

    let mut init_rng = substream(config.seed, "mlp-init", 0);
    let mut params = MlpParameters::init_uniform(arch, &mut init_rng);
    let mut adam = Adam::new(config.adam, &params);
    let mut history = Vec::with_capacity(config.epochs);
    let count = x.ncols();
    let mut order: Vec<usize> = (0..count).collect();

    for epoch in 0..config.epochs {
        let snapshot = params.clone();
        let mut rng = substream(config.seed, "mlp-shuffle", epoch as u64);
        order.shuffle(&mut rng);
        let lr = config.learning_rate(epoch);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let bx = x.select_columns(chunk);
            let bt = t.select_columns(chunk);
            let diverged = |params: MlpParameters| Error::Diverged {
                epoch,
                last_finite: Box::new(MlpEstimator {
                    params,
                    norm: norm.clone(),
                }),
            };
            let (loss, grad) = match params.loss_and_gradient(&bx, &bt) {
                Ok(v) => v,
                Err(Error::Numeric(_)) => return Err(diverged(snapshot)),
                Err(e) => return Err(e),
            };
            adam.step_with_rate(&mut params, &grad, lr);
            if params.layers().iter().any(|l| !l.is_finite()) {
                return Err(diverged(snapshot));
            }
            total += loss * chunk.len() as f64;
        }
        history.push(total / count as f64);
    }

    Ok(TrainOutcome {
        estimator: MlpEstimator { params, norm },
        loss_history: history,
    })
}

pub fn loss_history_csv(history: &[f64]) -> String {
    let mut out = String::from("epoch,loss\n");
    for (k, l) in history.iter().enumerate() {
        out.push_str(&format!("{},{:e}\n", k + 1, l));
    }
    out
}
