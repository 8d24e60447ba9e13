//! `fit-gp`: evidence grid search for the prior and noise scalings.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use bathy_core::kriging::{default_theta_grid, grid_search_theta_multi};
use bathy_core::synthetic::read_dataset_binary;
use bathy_core::KernelSpec;
use clap::Args;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config_table;
use crate::artifacts::{create_dir, write_text, DataDir, KernelConfig, ThetaFile, DATASET_FILE, THETA_FILE};
use crate::config::{overlay, resolve, usage, write_resolved};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub data: PathBuf,
    /// Defaults to `<data>/fit`.
    pub out: Option<PathBuf>,
    /// Measurement vectors whose evidences are summed, spread evenly over
    /// the dataset.
    pub samples: usize,
    pub theta1_grid: Vec<f64>,
    pub theta2_grid: Vec<f64>,
    pub prior: KernelConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            out: None,
            samples: 40,
            theta1_grid: default_theta_grid(),
            theta2_grid: default_theta_grid(),
            prior: KernelConfig::from_spec(KernelSpec::prior_shape()),
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "BATHY_DATA")]
    data: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta1_grid: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    theta2_grid: Option<Vec<f64>>,
    /// Range of the exponential prior shape.
    #[arg(long)]
    prior_range: Option<f64>,
}

impl FitArgs {
    pub fn resolve(&self) -> Result<FitConfig> {
        let mut cfg = resolve(&FitConfig::default(), config_table(self.config.as_deref())?.as_ref())?;
        overlay!(cfg, self; data, samples, theta1_grid, theta2_grid);
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if let Some(r) = self.prior_range {
            cfg.prior.range = r;
        }
        Ok(cfg)
    }
}

pub fn fit_gp_cmd(cfg: &FitConfig) -> Result<ThetaFile> {
    if cfg.samples == 0 {
        bail!(usage("fit-gp needs at least one sample"));
    }
    let data = DataDir::open(&cfg.data)?;
    let ds = read_dataset_binary(&data.path.join(DATASET_FILE))?;
    if ds.is_empty() {
        bail!("dataset is empty");
    }
    let count = cfg.samples.min(ds.len());
    let ys: Vec<DVector<f64>> = (0..count)
        .map(|k| ds.inputs.column(k * ds.len() / count).into_owned())
        .collect();
    let provisional = ThetaFile {
        theta1: 0.0,
        theta2: 0.0,
        log_evidence: f64::NAN,
        samples: count,
        prior: cfg.prior,
    };
    let prior = data.prior(&provisional)?;
    let fit =
        grid_search_theta_multi(&prior, &data.model, &ys, &cfg.theta1_grid, &cfg.theta2_grid).map_err(|e| match e {
            bathy_core::Error::Validation { .. } => usage(e.to_string()),
            other => other.into(),
        })?;

    let out = cfg.out.clone().unwrap_or_else(|| data.path.join("fit"));
    create_dir(&out)?;
    let mut csv = String::from("theta1,theta2,log_evidence\n");
    for (t1, t2, v) in &fit.surface {
        let _ = writeln!(csv, "{t1},{t2},{v}");
    }
    write_text(&out.join("evidence.csv"), &csv)?;
    let theta = ThetaFile {
        theta1: fit.theta.theta1,
        theta2: fit.theta.theta2,
        log_evidence: fit.log_evidence,
        samples: count,
        prior: cfg.prior,
    };
    theta.write(&out.join(THETA_FILE))?;
    eprintln!(
        "theta = ({}, {}) over {count} measurement vectors",
        theta.theta1, theta.theta2
    );
    write_resolved(cfg, &out)?;
    Ok(theta)
}
