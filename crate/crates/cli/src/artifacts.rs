//! On-disk artifacts shared between commands: data directories, fitted
//! hyper-parameters, checkpoints and survey folders.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use bathy_core::nn::read_checkpoint;
use bathy_core::{
    Field, GaussianPrior, GridSpec, KernelFamily, KernelSpec, Layout, MlpEstimator, ObservationModel, Observations,
    PriorShape,
};
use serde::{Deserialize, Serialize};

use crate::config::usage;

pub const DATASET_FILE: &str = "dataset.bin";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const LAYOUT_FILE: &str = "layout.txt";
pub const PRIOR_MEAN_FILE: &str = "prior_mean.txt";
pub const THETA_FILE: &str = "theta.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelName {
    Exponential,
    SquaredExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub family: KernelName,
    pub scale: f64,
    pub range: f64,
}

impl KernelConfig {
    pub fn from_spec(k: KernelSpec) -> Self {
        let family = match k.family {
            KernelFamily::Exponential => KernelName::Exponential,
            KernelFamily::SquaredExponential => KernelName::SquaredExponential,
        };
        Self {
            family,
            scale: k.scale,
            range: k.range,
        }
    }

    pub fn spec(&self) -> Result<KernelSpec> {
        let family = match self.family {
            KernelName::Exponential => KernelFamily::Exponential,
            KernelName::SquaredExponential => KernelFamily::SquaredExponential,
        };
        KernelSpec::new(family, self.scale, self.range).map_err(|e| usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub width: f64,
    pub length: f64,
}

impl GridConfig {
    pub fn desk() -> Self {
        Self {
            rows: 26,
            cols: 38,
            width: 500.0,
            length: 750.0,
        }
    }

    pub fn paper() -> Self {
        Self {
            rows: 51,
            cols: 75,
            width: 500.0,
            length: 750.0,
        }
    }

    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.rows, self.cols, self.width, self.length).map_err(|e| usage(e.to_string()))
    }
}

/// Output of `fit-gp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaFile {
    pub theta1: f64,
    pub theta2: f64,
    pub log_evidence: f64,
    pub samples: usize,
    pub prior: KernelConfig,
}

impl ThetaFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {} (run fit-gp first)", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, toml::to_string_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }
}

/// Grid, layout and prior mean of a generated data directory.
pub struct DataDir {
    pub path: PathBuf,
    pub grid: GridSpec,
    pub model: ObservationModel,
    pub prior_mean: Field,
}

impl DataDir {
    pub fn open(path: &Path) -> Result<Self> {
        if path.as_os_str().is_empty() {
            bail!(usage("no data directory given (--data)"));
        }
        let prior_mean = Field::read(&path.join(PRIOR_MEAN_FILE))
            .with_context(|| format!("opening data directory {}", path.display()))?;
        let grid = *prior_mean.grid();
        let layout = Layout::read(&path.join(LAYOUT_FILE))?;
        let model = layout.model(grid)?;
        Ok(Self {
            path: path.to_path_buf(),
            grid,
            model,
            prior_mean,
        })
    }

    pub fn default_theta_path(&self) -> PathBuf {
        self.path.join("fit").join(THETA_FILE)
    }

    pub fn theta(&self, explicit: Option<&Path>) -> Result<ThetaFile> {
        match explicit {
            Some(p) => ThetaFile::read(p),
            None => ThetaFile::read(&self.default_theta_path()),
        }
    }

    pub fn prior(&self, theta: &ThetaFile) -> Result<GaussianPrior> {
        let shape = Arc::new(PriorShape::from_kernel(&theta.prior.spec()?, &self.grid)?);
        Ok(GaussianPrior::with_shape(self.prior_mean.clone(), shape, theta.theta1)?)
    }

    /// Observation model matching `obs`, keeping the variances stored in the
    /// observation file.
    pub fn model_for(&self, obs: &Observations) -> Result<ObservationModel> {
        if obs.values.len() != self.model.m() || obs.n_points != self.model.n_points() {
            bail!(
                "observation file has {} points and {} averages, layout expects {} and {}",
                obs.n_points,
                obs.n_averages(),
                self.model.n_points(),
                self.model.n_averages()
            );
        }
        Ok(ObservationModel::from_matrix(
            self.grid,
            self.model.h().clone(),
            obs.variances.clone(),
            obs.n_points,
        )?)
    }
}

pub fn load_checkpoint(path: Option<&Path>, method: &str, grid: &GridSpec, m: usize) -> Result<MlpEstimator> {
    let path = path.ok_or_else(|| usage(format!("method {method} needs --checkpoint")))?;
    let est = read_checkpoint(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let arch = est.architecture();
    if arch.input_dim != m || arch.output_dim != grid.len() {
        bail!(usage(format!(
            "checkpoint maps {} -> {} values, data needs {} -> {}",
            arch.input_dim,
            arch.output_dim,
            m,
            grid.len()
        )));
    }
    Ok(est)
}

/// Field files (`*.txt`) of a directory, sorted by name, with their stems.
pub fn read_field_dir(dir: &Path) -> Result<Vec<(String, Field)>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!(usage(format!("no field files in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let stem = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((stem, Field::read(p)?))
        })
        .collect()
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
