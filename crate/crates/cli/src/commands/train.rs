//! `train`: fit the posterior-mean network on a generated dataset.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use bathy_core::nn::{loss_history_csv, train, write_checkpoint, AdamConfig, DESK_HIDDEN, PAPER_HIDDEN};
use bathy_core::synthetic::read_dataset_binary;
use bathy_core::{Activation, MlpArchitecture, MlpEstimator, TrainConfig};
use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use super::config_table;
use crate::artifacts::{create_dir, write_text, DataDir, DATASET_FILE};
use crate::config::{overlay, resolve, usage, write_resolved};

/// Hyper-parameter presets. `desk` runs in minutes on a laptop; `paper`
/// uses the full-size network and takes hours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl Profile {
    /// Profile named on the command line, else in the config file, else desk.
    pub fn select(flag: Option<Profile>, file: Option<&toml::Table>) -> Result<Profile> {
        if let Some(p) = flag {
            return Ok(p);
        }
        match file.and_then(|t| t.get("profile")) {
            Some(v) => Profile::deserialize(v.clone()).map_err(|e| usage(format!("profile: {e}"))),
            None => Ok(Profile::Desk),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationName {
    Relu,
    Tanh,
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Self {
        match a {
            ActivationName::Relu => Activation::Relu,
            ActivationName::Tanh => Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub profile: Profile,
    pub data: PathBuf,
    pub out: PathBuf,
    pub hidden: Vec<usize>,
    pub activation: ActivationName,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub seed: u64,
    /// Train on the first pairs only; 0 uses all of them.
    pub max_samples: usize,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl TrainCmdConfig {
    pub fn for_profile(profile: Profile) -> Self {
        let (hidden, learning_rate, final_lr_fraction) = match profile {
            Profile::Desk => (DESK_HIDDEN.to_vec(), 1e-3, 0.05),
            Profile::Paper => (PAPER_HIDDEN.to_vec(), AdamConfig::default().learning_rate, 1.0),
        };
        let base = TrainConfig::default();
        Self {
            profile,
            data: PathBuf::new(),
            out: PathBuf::from("model"),
            hidden,
            activation: ActivationName::Relu,
            epochs: base.epochs,
            batch_size: base.batch_size,
            learning_rate,
            final_lr_fraction,
            seed: 0,
            max_samples: 0,
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            batch_size: self.batch_size,
            epochs: self.epochs,
            final_lr_fraction: self.final_lr_fraction,
            seed: self.seed,
            normalize: true,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[arg(long, env = "BATHY_DATA")]
    data: Option<PathBuf>,
    /// Output directory for the checkpoint and loss history.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    activation: Option<ActivationName>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    final_lr_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_samples: Option<usize>,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainCmdConfig> {
        let file = config_table(self.config.as_deref())?;
        let profile = Profile::select(self.profile, file.as_ref())?;
        let mut cfg = resolve(&TrainCmdConfig::for_profile(profile), file.as_ref())?;
        overlay!(cfg, self; data, out, hidden, activation, epochs, batch_size, learning_rate,
            final_lr_fraction, seed, max_samples);
        Ok(cfg)
    }
}

pub fn train_cmd(cfg: &TrainCmdConfig) -> Result<()> {
    let data = DataDir::open(&cfg.data)?;
    let mut ds = read_dataset_binary(&data.path.join(DATASET_FILE))?;
    if cfg.max_samples > 0 {
        ds = ds.head(cfg.max_samples);
    }
    if ds.is_empty() {
        bail!("dataset is empty");
    }
    let arch = MlpArchitecture::new(ds.input_dim(), cfg.hidden.clone(), ds.grid.len(), cfg.activation.into())
        .map_err(|e| usage(e.to_string()))?;
    let tc = cfg.train_config();
    tc.validate().map_err(|e| usage(e.to_string()))?;

    create_dir(&cfg.out)?;
    write_resolved(cfg, &cfg.out)?;
    let outcome = match train(&ds, &arch, &tc, Some(data.prior_mean.values())) {
        Ok(o) => o,
        Err(bathy_core::Error::Diverged { epoch, last_finite }) => {
            let path = cfg.out.join("model.diverged.ckpt");
            write_checkpoint(&last_finite, &path)?;
            bail!(
                "training diverged in epoch {epoch}; last finite parameters saved to {}",
                path.display()
            );
        }
        Err(e) => return Err(e.into()),
    };
    save_model(&outcome.estimator, cfg)?;
    write_text(
        &cfg.out.join("loss_history.csv"),
        &loss_history_csv(&outcome.loss_history),
    )?;
    if let Some(last) = outcome.loss_history.last() {
        eprintln!(
            "trained {} epochs on {} pairs, final loss {last:.6}",
            cfg.epochs,
            ds.len()
        );
    }
    Ok(())
}

fn save_model(est: &MlpEstimator, cfg: &TrainCmdConfig) -> Result<()> {
    let path = cfg.out.join("model.ckpt");
    write_checkpoint(est, &path).with_context(|| format!("writing {}", path.display()))
}
