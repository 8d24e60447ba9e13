//! `benchmark`: every method on held-out surveys with synthesized jumps.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Result};
use bathy_core::evaluation::{run_benchmark, SharedEstimator};
use bathy_core::realization::DEFAULT_BAND_LEVEL;
use bathy_core::rng::derive_seed;
use bathy_core::synthetic::{generate_pair, jumps_per_survey};
use bathy_core::{
    BenchmarkConfig, BenchmarkReport, GaussianFieldSampler, JumpSpec, KernelSpec, Method, NoiseScaling, TestSurvey,
};
use clap::Args;
use serde::{Deserialize, Serialize};

use super::config_table;
use super::estimate::{check_level, EstimateMethod, TvSection};
use crate::artifacts::{create_dir, load_checkpoint, read_field_dir, write_text, DataDir, KernelConfig};
use crate::config::{overlay, resolve, usage, write_resolved};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchCmdConfig {
    pub data: PathBuf,
    pub theta: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Directory of held-out base surveys; each is perturbed and, for the
    /// first `jump_fraction` of them, given a jump before measuring.
    pub test_surveys: PathBuf,
    pub out: PathBuf,
    pub methods: Vec<EstimateMethod>,
    pub seed: u64,
    pub jump_fraction: f64,
    pub perturbation: KernelConfig,
    /// Network bootstrap draws per survey for the DNN bands.
    pub dnn_samples: usize,
    pub band_level: f64,
    pub tv: TvSection,
}

impl Default for BenchCmdConfig {
    fn default() -> Self {
        Self {
            data: PathBuf::new(),
            theta: None,
            checkpoint: None,
            test_surveys: PathBuf::new(),
            out: PathBuf::from("benchmark"),
            methods: vec![EstimateMethod::Kriging, EstimateMethod::Dnn, EstimateMethod::DnnKriging],
            seed: 0,
            jump_fraction: 1.0,
            perturbation: KernelConfig::from_spec(KernelSpec::perturbation()),
            dnn_samples: 200,
            band_level: DEFAULT_BAND_LEVEL,
            tv: TvSection::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "BATHY_DATA")]
    data: Option<PathBuf>,
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long, env = "BATHY_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    #[arg(long, env = "BATHY_TEST_SURVEYS")]
    test_surveys: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Methods, comma separated.
    #[arg(long, value_enum, value_delimiter = ',')]
    methods: Option<Vec<EstimateMethod>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jump_fraction: Option<f64>,
    #[arg(long)]
    dnn_samples: Option<usize>,
    #[arg(long)]
    band_level: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
}

impl BenchArgs {
    pub fn resolve(&self) -> Result<BenchCmdConfig> {
        let mut cfg = resolve(
            &BenchCmdConfig::default(),
            config_table(self.config.as_deref())?.as_ref(),
        )?;
        overlay!(cfg, self; data, test_surveys, out, methods, seed, jump_fraction, dnn_samples, band_level);
        if self.theta.is_some() {
            cfg.theta.clone_from(&self.theta);
        }
        if self.checkpoint.is_some() {
            cfg.checkpoint.clone_from(&self.checkpoint);
        }
        overlay!(cfg.tv, self; lambda, eps);
        Ok(cfg)
    }
}

pub fn benchmark_cmd(cfg: &BenchCmdConfig) -> Result<BenchmarkReport> {
    check_level(cfg.band_level)?;
    if !(0.0..=1.0).contains(&cfg.jump_fraction) {
        bail!(usage(format!("jump fraction {} outside [0, 1]", cfg.jump_fraction)));
    }
    if cfg.test_surveys.as_os_str().is_empty() {
        bail!(usage("no test survey directory given (--test-surveys)"));
    }
    let data = DataDir::open(&cfg.data)?;
    let theta = data.theta(cfg.theta.as_deref())?;
    let prior = data.prior(&theta)?;
    let model = &data.model;

    let needs_net = cfg
        .methods
        .iter()
        .any(|m| matches!(m, EstimateMethod::Dnn | EstimateMethod::DnnKriging));
    let net: Option<SharedEstimator> = if needs_net {
        let est = load_checkpoint(cfg.checkpoint.as_deref(), "dnn", &data.grid, model.m())?;
        Some(Arc::new(est))
    } else {
        None
    };
    let methods = cfg
        .methods
        .iter()
        .map(|m| {
            let method = match m {
                EstimateMethod::Kriging => Method::Kriging,
                EstimateMethod::Dnn => Method::Dnn(net.clone().expect("loaded above")),
                EstimateMethod::DnnKriging => Method::DnnKriging(net.clone().expect("loaded above")),
                EstimateMethod::Tv => Method::Tv(cfg.tv.config(theta.theta2)?),
            };
            Ok((m.name().to_string(), method))
        })
        .collect::<Result<Vec<_>>>()?;

    let bases = read_field_dir(&cfg.test_surveys)?;
    let sampler = GaussianFieldSampler::new(&cfg.perturbation.spec()?, &data.grid)?;
    let jumped = jumps_per_survey(bases.len(), cfg.jump_fraction);
    let truth_seed = derive_seed(cfg.seed, "benchmark-truth");
    let surveys = bases
        .iter()
        .enumerate()
        .map(|(k, (id, base))| {
            base.check_grid(&data.grid)?;
            let (_, truth, corner) = generate_pair(base, k < jumped, &sampler, model, truth_seed, k as u64)?;
            Ok(TestSurvey {
                id: id.clone(),
                truth,
                jump: corner.map(JumpSpec::standard),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let bench = BenchmarkConfig {
        noise: NoiseScaling(theta.theta2),
        band_level: cfg.band_level,
        dnn_samples: cfg.dnn_samples,
        seed: cfg.seed,
    };
    let report = run_benchmark(&surveys, &methods, &prior, model, &bench)?;

    create_dir(&cfg.out)?;
    let truths = cfg.out.join("truths");
    create_dir(&truths)?;
    for s in &surveys {
        s.truth.write(&truths.join(format!("{}.txt", s.id)))?;
    }
    write_text(&cfg.out.join("report.csv"), &report.report_csv())?;
    write_text(&cfg.out.join("summary.csv"), &report.summary_csv())?;
    write_text(&cfg.out.join("sections.csv"), &report.sections_csv())?;
    write_resolved(cfg, &cfg.out)?;
    for (name, _) in &methods {
        if let Some(r) = report.mean_rmse(name) {
            eprintln!("{name:>12}: mean rmse {r:.4}");
        }
    }
    Ok(report)
}
