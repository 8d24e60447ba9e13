//! `estimate` and `sample`: single-survey estimation and conditional
//! realizations from an observation file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use bathy_core::evaluation::coverage_gaussian;
use bathy_core::hybrid::dnn_kriging_reestimated;
use bathy_core::kriging::{default_theta_grid, sample_posterior_cholesky};
use bathy_core::nn::sample_posterior_dnn;
use bathy_core::realization::{gaussian_band, summary_csv, DEFAULT_BAND_LEVEL};
use bathy_core::{
    dnn_kriging, rmse, sample_hybrid, tv_map, Field, Kriging, NoiseScaling, Observations, PosteriorMeanEstimator,
    TvConfig,
};
use clap::{Args, ValueEnum};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::config_table;
use crate::artifacts::{create_dir, load_checkpoint, write_text, DataDir};
use crate::config::{overlay, resolve, usage, write_resolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateMethod {
    #[default]
    Kriging,
    Dnn,
    DnnKriging,
    Tv,
}

impl EstimateMethod {
    pub fn name(self) -> &'static str {
        match self {
            EstimateMethod::Kriging => "kriging",
            EstimateMethod::Dnn => "dnn",
            EstimateMethod::DnnKriging => "dnn-kriging",
            EstimateMethod::Tv => "tv",
        }
    }
}

/// TV settings exposed in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TvSection {
    pub lambda: f64,
    pub eps: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for TvSection {
    fn default() -> Self {
        let d = TvConfig::default();
        Self {
            lambda: d.lambda,
            eps: d.eps,
            max_iters: d.max_iters,
            grad_tol: d.grad_tol,
        }
    }
}

impl TvSection {
    pub fn config(&self, theta2: f64) -> Result<TvConfig> {
        let c = TvConfig {
            lambda: self.lambda,
            eps: self.eps,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            theta2,
            ..TvConfig::default()
        };
        c.validate().map_err(|e| usage(e.to_string()))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateConfig {
    pub method: EstimateMethod,
    pub data: PathBuf,
    pub obs: PathBuf,
    pub out: PathBuf,
    /// Fitted hyper-parameters; defaults to `<data>/fit/theta.toml`.
    pub theta: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Reference field for RMSE and coverage.
    pub reference: Option<PathBuf>,
    pub band_level: f64,
    /// DNN-Kriging only: re-select the scalings with the network prediction
    /// as prior mean.
    pub reestimate_theta: bool,
    pub tv: TvSection,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        Self {
            method: EstimateMethod::Kriging,
            data: PathBuf::new(),
            obs: PathBuf::new(),
            out: PathBuf::from("estimate"),
            theta: None,
            checkpoint: None,
            reference: None,
            band_level: DEFAULT_BAND_LEVEL,
            reestimate_theta: false,
            tv: TvSection::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<EstimateMethod>,
    #[arg(long, env = "BATHY_DATA")]
    data: Option<PathBuf>,
    /// Observation file.
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long, env = "BATHY_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long)]
    band_level: Option<f64>,
    #[arg(long)]
    reestimate_theta: bool,
    /// TV weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// TV smoothing length in meters.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
}

impl EstimateArgs {
    pub fn resolve(&self) -> Result<EstimateConfig> {
        let mut cfg = resolve(
            &EstimateConfig::default(),
            config_table(self.config.as_deref())?.as_ref(),
        )?;
        overlay!(cfg, self; method, data, obs, out, band_level);
        for (dst, src) in [
            (&mut cfg.theta, &self.theta),
            (&mut cfg.checkpoint, &self.checkpoint),
            (&mut cfg.reference, &self.reference),
        ] {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        cfg.reestimate_theta |= self.reestimate_theta;
        overlay!(cfg.tv, self; lambda, eps, max_iters);
        Ok(cfg)
    }
}

fn read_obs(path: &Path) -> Result<Observations> {
    if path.as_os_str().is_empty() {
        bail!(usage("no observation file given (--obs)"));
    }
    Ok(Observations::read(path)?)
}

fn read_reference(path: Option<&Path>, data: &DataDir) -> Result<Option<Field>> {
    path.map(|p| {
        let f = Field::read(p)?;
        f.check_grid(&data.grid)?;
        Ok(f)
    })
    .transpose()
}

pub fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        bail!(usage(format!("band level {level} outside (0, 1)")));
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn estimate_cmd(cfg: &EstimateConfig) -> Result<()> {
    check_level(cfg.band_level)?;
    let data = DataDir::open(&cfg.data)?;
    let obs = read_obs(&cfg.obs)?;
    let model = data.model_for(&obs)?;
    let reference = read_reference(cfg.reference.as_deref(), &data)?;
    let y = &obs.values;
    let theta = data.theta(cfg.theta.as_deref())?;
    let prior = data.prior(&theta)?;
    let noise = NoiseScaling(theta.theta2);
    let method = cfg.method.name();

    create_dir(&cfg.out)?;
    // (estimate, posterior std when the method has one)
    let (estimate, std): (Field, Option<DVector<f64>>) = match cfg.method {
        EstimateMethod::Kriging => {
            let post = Kriging::new(&prior, &model, noise)?.posterior(y)?;
            let std = post.std_dev();
            (post.mean, Some(std))
        }
        EstimateMethod::Dnn => {
            let est = load_checkpoint(cfg.checkpoint.as_deref(), method, &data.grid, model.m())?;
            (Field::new(data.grid, est.estimate(y)?)?, None)
        }
        EstimateMethod::DnnKriging => {
            let est = load_checkpoint(cfg.checkpoint.as_deref(), method, &data.grid, model.m())?;
            let res = if cfg.reestimate_theta {
                let g = default_theta_grid();
                dnn_kriging_reestimated(&est, &prior, &model, y, &g, &g)?
            } else {
                dnn_kriging(&est, &prior, &model, noise, y)?
            };
            res.dnn_mean.write(&cfg.out.join("dnn.txt"))?;
            res.corrected_mean.write(&cfg.out.join("corrected.txt"))?;
            let std = res.std_dev();
            (res.corrected_mean, Some(std))
        }
        EstimateMethod::Tv => {
            let init = Kriging::new(&prior, &model, noise)?.posterior_mean(y)?;
            let (field, report) = tv_map(y, &model, &cfg.tv.config(theta.theta2)?, &init)?;
            write_text(&cfg.out.join("tv_convergence.csv"), &report.to_csv())?;
            if !report.converged {
                eprintln!(
                    "warning: TV stopped after {} iterations with gradient norm {:.3e}",
                    report.iterations, report.grad_norm
                );
            }
            (field, None)
        }
    };
    if cfg.method != EstimateMethod::DnnKriging {
        estimate.write(&cfg.out.join("estimate.txt"))?;
    }

    let mut coverage = None;
    if let Some(std) = &std {
        Field::new(data.grid, std.clone())?.write(&cfg.out.join("std.txt"))?;
        let (lo, hi) = gaussian_band(estimate.values(), std, cfg.band_level)?;
        write_text(&cfg.out.join("std.csv"), &summary_csv(estimate.values(), std, &lo, &hi))?;
        if let Some(r) = &reference {
            coverage = Some(coverage_gaussian(&estimate, std, r, cfg.band_level)?);
        }
    }
    let err = reference.as_ref().map(|r| rmse(&estimate, r)).transpose()?;
    let misfit = model.weighted_misfit(y, estimate.values(), theta.theta2)?;
    let summary = format!(
        "method,rmse,coverage,misfit\n{method},{},{},{misfit}\n",
        fmt_opt(err),
        fmt_opt(coverage)
    );
    write_text(&cfg.out.join("summary.csv"), &summary)?;
    write_resolved(cfg, &cfg.out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    #[default]
    Cholesky,
    Bootstrap,
    DnnBootstrap,
    Hybrid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub method: SampleMethod,
    pub data: PathBuf,
    pub obs: PathBuf,
    pub out: PathBuf,
    pub theta: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub count: usize,
    pub seed: u64,
    pub band_level: f64,
    /// Write every realization as a field file.
    pub write_realizations: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            method: SampleMethod::Cholesky,
            data: PathBuf::new(),
            obs: PathBuf::new(),
            out: PathBuf::from("samples"),
            theta: None,
            checkpoint: None,
            count: 1000,
            seed: 0,
            band_level: DEFAULT_BAND_LEVEL,
            write_realizations: true,
        }
    }
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<SampleMethod>,
    #[arg(long, env = "BATHY_DATA")]
    data: Option<PathBuf>,
    #[arg(long)]
    obs: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    theta: Option<PathBuf>,
    #[arg(long, env = "BATHY_CHECKPOINT")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    band_level: Option<f64>,
    /// Only write the summary.
    #[arg(long)]
    summary_only: bool,
}

impl SampleArgs {
    pub fn resolve(&self) -> Result<SampleConfig> {
        let mut cfg = resolve(&SampleConfig::default(), config_table(self.config.as_deref())?.as_ref())?;
        overlay!(cfg, self; method, data, obs, out, count, seed, band_level);
        if self.theta.is_some() {
            cfg.theta.clone_from(&self.theta);
        }
        if self.checkpoint.is_some() {
            cfg.checkpoint.clone_from(&self.checkpoint);
        }
        if self.summary_only {
            cfg.write_realizations = false;
        }
        Ok(cfg)
    }
}

pub fn sample_cmd(cfg: &SampleConfig) -> Result<()> {
    if cfg.count == 0 {
        bail!(usage("sample count must be at least 1"));
    }
    check_level(cfg.band_level)?;
    let data = DataDir::open(&cfg.data)?;
    let obs = read_obs(&cfg.obs)?;
    let model = data.model_for(&obs)?;
    let y = &obs.values;
    let theta = data.theta(cfg.theta.as_deref())?;
    let prior = data.prior(&theta)?;
    let noise = NoiseScaling(theta.theta2);
    let batch = match cfg.method {
        SampleMethod::Cholesky => {
            let post = Kriging::new(&prior, &model, noise)?.posterior(y)?;
            sample_posterior_cholesky(&post, cfg.count, cfg.seed)?
        }
        SampleMethod::Bootstrap => Kriging::new(&prior, &model, noise)?.sample_bootstrap(y, cfg.count, cfg.seed)?,
        SampleMethod::DnnBootstrap => {
            let est = load_checkpoint(cfg.checkpoint.as_deref(), "dnn-bootstrap", &data.grid, model.m())?;
            sample_posterior_dnn(&est, &prior, &model, noise, y, cfg.count, cfg.seed)?
        }
        SampleMethod::Hybrid => {
            let est = load_checkpoint(cfg.checkpoint.as_deref(), "hybrid", &data.grid, model.m())?;
            sample_hybrid(&dnn_kriging(&est, &prior, &model, noise, y)?, cfg.count, cfg.seed)?
        }
    };
    let s = batch.summarize(cfg.band_level).expect("non-empty batch");

    create_dir(&cfg.out)?;
    write_text(
        &cfg.out.join("summary.csv"),
        &summary_csv(&s.mean, &s.std, &s.lo, &s.hi),
    )?;
    Field::new(data.grid, s.mean)?.write(&cfg.out.join("mean.txt"))?;
    Field::new(data.grid, s.std)?.write(&cfg.out.join("std.txt"))?;
    if cfg.write_realizations {
        let dir = cfg.out.join("realizations");
        create_dir(&dir)?;
        let mut index = String::from("realization,file\n");
        for (k, f) in batch.realizations().iter().enumerate() {
            let name = format!("real_{k:05}.txt");
            f.write(&dir.join(&name))?;
            let _ = writeln!(index, "{k},{name}");
        }
        write_text(&dir.join("index.csv"), &index)?;
    }
    write_resolved(cfg, &cfg.out)
}
