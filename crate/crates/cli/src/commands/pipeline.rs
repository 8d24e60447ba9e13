//! `pipeline`: surveys, dataset, evidence fit, training and benchmark in
//! one run, each stage seeded from the root seed.

use std::path::PathBuf;

use anyhow::{Context, Result};
use bathy_core::rng::derive_seed;
use clap::Args;
use serde::{Deserialize, Serialize};

use super::benchmark::{benchmark_cmd, BenchCmdConfig};
use super::config_table;
use super::data::{generate_cmd, make_base_surveys_cmd, GenerateConfig, SurveysConfig};
use super::estimate::EstimateMethod;
use super::fit::{fit_gp_cmd, FitConfig};
use super::train::{train_cmd, ActivationName, Profile, TrainCmdConfig};
use crate::artifacts::GridConfig;
use crate::config::{overlay, resolve, write_resolved};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub profile: Profile,
    pub seed: u64,
    pub out: PathBuf,
    pub grid: GridConfig,
    pub train_surveys: usize,
    pub test_surveys: usize,
    pub per_survey: usize,
    pub jump_fraction: f64,
    pub test_jump_fraction: f64,
    pub fit_samples: usize,
    pub hidden: Vec<usize>,
    pub activation: ActivationName,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub final_lr_fraction: f64,
    pub methods: Vec<EstimateMethod>,
    pub dnn_samples: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::for_profile(Profile::Desk)
    }
}

impl PipelineConfig {
    /// `desk`: 26x38 grid, 10,000 jump-bearing pairs, 256-wide network
    /// (minutes). `paper`: 51x75 grid, 239 x 400 pairs with half of them
    /// jumped, 2000-wide network (hours).
    pub fn for_profile(profile: Profile) -> Self {
        let net = TrainCmdConfig::for_profile(profile);
        let (grid, train_surveys, per_survey, jump_fraction) = match profile {
            Profile::Desk => (GridConfig::desk(), 50, 200, 1.0),
            Profile::Paper => (GridConfig::paper(), 239, 400, 0.5),
        };
        Self {
            profile,
            seed: 0,
            out: PathBuf::from("run"),
            grid,
            train_surveys,
            test_surveys: 15,
            per_survey,
            jump_fraction,
            test_jump_fraction: 1.0,
            fit_samples: 40,
            hidden: net.hidden,
            activation: net.activation,
            epochs: net.epochs,
            batch_size: net.batch_size,
            learning_rate: net.learning_rate,
            final_lr_fraction: net.final_lr_fraction,
            methods: vec![
                EstimateMethod::Kriging,
                EstimateMethod::Dnn,
                EstimateMethod::DnnKriging,
                EstimateMethod::Tv,
            ],
            dnn_samples: 200,
        }
    }
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    profile: Option<Profile>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "BATHY_OUT")]
    out: Option<PathBuf>,
    #[arg(long)]
    train_surveys: Option<usize>,
    #[arg(long)]
    test_surveys: Option<usize>,
    #[arg(long)]
    per_survey: Option<usize>,
    #[arg(long)]
    jump_fraction: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<EstimateMethod>>,
    #[arg(long)]
    dnn_samples: Option<usize>,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let file = config_table(self.config.as_deref())?;
        let profile = Profile::select(self.profile, file.as_ref())?;
        let mut cfg = resolve(&PipelineConfig::for_profile(profile), file.as_ref())?;
        overlay!(cfg, self; seed, out, train_surveys, test_surveys, per_survey, jump_fraction, epochs,
            hidden, methods, dnn_samples);
        Ok(cfg)
    }
}

pub fn pipeline_cmd(cfg: &PipelineConfig) -> Result<()> {
    write_resolved(cfg, &cfg.out)?;
    let train_dir = cfg.out.join("surveys").join("train");
    let test_dir = cfg.out.join("surveys").join("test");
    let data_dir = cfg.out.join("data");
    let model_dir = cfg.out.join("model");

    for (dir, count, name) in [
        (&train_dir, cfg.train_surveys, "train-surveys"),
        (&test_dir, cfg.test_surveys, "test-surveys"),
    ] {
        make_base_surveys_cmd(&SurveysConfig {
            out: dir.clone(),
            count,
            seed: derive_seed(cfg.seed, name),
            grid: cfg.grid,
        })
        .with_context(|| format!("stage make-base-surveys ({name})"))?;
    }

    generate_cmd(&GenerateConfig {
        surveys: train_dir,
        out: data_dir.clone(),
        per_survey: cfg.per_survey,
        jump_fraction: cfg.jump_fraction,
        seed: derive_seed(cfg.seed, "generate"),
        ..GenerateConfig::default()
    })
    .context("stage generate")?;

    fit_gp_cmd(&FitConfig {
        data: data_dir.clone(),
        samples: cfg.fit_samples,
        ..FitConfig::default()
    })
    .context("stage fit-gp")?;

    let needs_net = cfg
        .methods
        .iter()
        .any(|m| matches!(m, EstimateMethod::Dnn | EstimateMethod::DnnKriging));
    if needs_net {
        train_cmd(&TrainCmdConfig {
            profile: cfg.profile,
            data: data_dir.clone(),
            out: model_dir.clone(),
            hidden: cfg.hidden.clone(),
            activation: cfg.activation,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            learning_rate: cfg.learning_rate,
            final_lr_fraction: cfg.final_lr_fraction,
            seed: derive_seed(cfg.seed, "train"),
            max_samples: 0,
        })
        .context("stage train")?;
    }

    benchmark_cmd(&BenchCmdConfig {
        data: data_dir,
        checkpoint: needs_net.then(|| model_dir.join("model.ckpt")),
        test_surveys: test_dir,
        out: cfg.out.join("benchmark"),
        methods: cfg.methods.clone(),
        seed: derive_seed(cfg.seed, "benchmark"),
        jump_fraction: cfg.test_jump_fraction,
        dnn_samples: cfg.dnn_samples,
        ..BenchCmdConfig::default()
    })
    .context("stage benchmark")?;
    Ok(())
}
