//! Bathymetry estimation from sparse point and cell-average measurements:
//! Gaussian-process Kriging with evidence-based hyper-parameters, a
//! fully connected posterior-mean network, their hybrid, a total-variation
//! baseline, and the synthetic data and evaluation tooling around them.

pub mod covariance;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod grid;
pub mod hybrid;
pub mod kriging;
pub mod linalg;
pub mod nn;
pub mod observation;
pub mod realization;
pub mod rng;
pub mod synthetic;
pub mod tv;

pub use covariance::{build_covariance, GaussianFieldSampler, KernelFamily, KernelSpec};
pub use error::{Error, Result};
pub use estimator::{AffineMap, ConstantMean, KrigingMean, PosteriorMeanEstimator};
pub use evaluation::{rmse, Axis, BenchmarkConfig, BenchmarkReport, Method, Section, TestSurvey};
pub use grid::{Field, GridCoord, GridSpec};
pub use hybrid::{dnn_kriging, sample_hybrid, HybridResult};
pub use kriging::{GaussianPrior, Kriging, NoiseScaling, PosteriorGaussian, PriorShape, Theta};
pub use nn::{Activation, MlpArchitecture, MlpEstimator, MlpParameters, TrainConfig};
pub use observation::{Layout, ObservationModel, Observations};
pub use realization::{RealizationBatch, RealizationSummary};
pub use synthetic::{DatasetSpec, JumpSpec, TrainingDataset};
pub use tv::{tv_map, tv_objective, TvConfig, TvReport};
