//! `make-base-surveys` and `generate`.

use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use bathy_core::synthetic::{generate_dataset, make_base_surveys, mean_field, write_dataset_binary};
use bathy_core::{DatasetSpec, Field, KernelSpec, Layout, Observations};
use clap::Args;
use serde::{Deserialize, Serialize};

use super::config_table;
use crate::artifacts::{
    create_dir, read_field_dir, write_text, GridConfig, KernelConfig, DATASET_FILE, LAYOUT_FILE, MANIFEST_FILE,
    PRIOR_MEAN_FILE,
};
use crate::config::{overlay, resolve, usage, write_resolved};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurveysConfig {
    pub out: PathBuf,
    pub count: usize,
    pub seed: u64,
    pub grid: GridConfig,
}

impl Default for SurveysConfig {
    fn default() -> Self {
        Self {
            out: PathBuf::from("surveys"),
            count: 20,
            seed: 0,
            grid: GridConfig::desk(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SurveysArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the survey field files.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    width: Option<f64>,
    #[arg(long)]
    length: Option<f64>,
}

impl SurveysArgs {
    pub fn resolve(&self) -> Result<SurveysConfig> {
        let mut cfg = resolve(
            &SurveysConfig::default(),
            config_table(self.config.as_deref())?.as_ref(),
        )?;
        overlay!(cfg, self; out, count, seed);
        overlay!(cfg.grid, self; rows, cols, width, length);
        Ok(cfg)
    }
}

pub fn make_base_surveys_cmd(cfg: &SurveysConfig) -> Result<()> {
    if cfg.count == 0 {
        bail!(usage("survey count must be at least 1"));
    }
    let grid = cfg.grid.spec()?;
    create_dir(&cfg.out)?;
    for (k, f) in make_base_surveys(&grid, cfg.count, cfg.seed).iter().enumerate() {
        f.write(&cfg.out.join(format!("survey_{k:04}.txt")))?;
    }
    write_resolved(cfg, &cfg.out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub surveys: PathBuf,
    pub out: PathBuf,
    pub per_survey: usize,
    pub jump_fraction: f64,
    pub seed: u64,
    /// Station/block layout file; the default layout when absent.
    pub layout: Option<PathBuf>,
    /// Prior mean field; the average of the surveys when absent.
    pub prior_mean: Option<PathBuf>,
    /// Also write every pair as a field file and an observation file.
    pub text_pairs: bool,
    pub perturbation: KernelConfig,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            surveys: PathBuf::new(),
            out: PathBuf::from("data"),
            per_survey: 400,
            jump_fraction: 0.5,
            seed: 0,
            layout: None,
            prior_mean: None,
            text_pairs: false,
            perturbation: KernelConfig::from_spec(KernelSpec::perturbation()),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of base survey field files.
    #[arg(long, env = "BATHY_SURVEYS")]
    surveys: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    per_survey: Option<usize>,
    #[arg(long)]
    jump_fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    layout: Option<PathBuf>,
    #[arg(long)]
    prior_mean: Option<PathBuf>,
    #[arg(long)]
    text_pairs: bool,
    /// Perturbation kernel range (normalized distance).
    #[arg(long)]
    kernel_range: Option<f64>,
    /// Perturbation kernel variance.
    #[arg(long)]
    kernel_scale: Option<f64>,
}

impl GenerateArgs {
    pub fn resolve(&self) -> Result<GenerateConfig> {
        let mut cfg = resolve(
            &GenerateConfig::default(),
            config_table(self.config.as_deref())?.as_ref(),
        )?;
        overlay!(cfg, self; surveys, out, per_survey, jump_fraction, seed);
        if self.layout.is_some() {
            cfg.layout = self.layout.clone();
        }
        if self.prior_mean.is_some() {
            cfg.prior_mean = self.prior_mean.clone();
        }
        cfg.text_pairs |= self.text_pairs;
        if let Some(r) = self.kernel_range {
            cfg.perturbation.range = r;
        }
        if let Some(s) = self.kernel_scale {
            cfg.perturbation.scale = s;
        }
        Ok(cfg)
    }
}

pub fn generate_cmd(cfg: &GenerateConfig) -> Result<()> {
    if cfg.surveys.as_os_str().is_empty() {
        bail!(usage("no survey directory given (--surveys)"));
    }
    if cfg.per_survey == 0 {
        bail!(usage("per-survey count must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.jump_fraction) {
        bail!(usage(format!("jump fraction {} outside [0, 1]", cfg.jump_fraction)));
    }
    let named = read_field_dir(&cfg.surveys)?;
    let grid = *named[0].1.grid();
    let fields: Vec<Field> = named.iter().map(|(_, f)| f.clone()).collect();
    let layout = match &cfg.layout {
        Some(p) => Layout::read(p)?,
        None => Layout::default_for(&grid)?,
    };
    let model = layout.model(grid)?;
    let prior_mean = match &cfg.prior_mean {
        Some(p) => {
            let f = Field::read(p)?;
            f.check_grid(&grid)?;
            f
        }
        None => mean_field(&fields)?,
    };
    let spec = DatasetSpec {
        per_survey: cfg.per_survey,
        jump_fraction: cfg.jump_fraction,
        kernel: cfg.perturbation.spec()?,
        seed: cfg.seed,
    };
    let ds = generate_dataset(&fields, &model, &spec)?;

    create_dir(&cfg.out)?;
    write_dataset_binary(&ds, &cfg.out.join(DATASET_FILE))?;
    layout.write(&cfg.out.join(LAYOUT_FILE))?;
    prior_mean.write(&cfg.out.join(PRIOR_MEAN_FILE))?;

    let mut manifest = String::from("pair,survey,survey_file,jumped,corner_i,corner_j\n");
    for (k, m) in ds.meta.iter().enumerate() {
        let (flag, ci, cj) = match m.jump {
            Some(c) => (1, c.i.to_string(), c.j.to_string()),
            None => (0, String::new(), String::new()),
        };
        let _ = writeln!(manifest, "{k},{},{},{flag},{ci},{cj}", m.survey, named[m.survey].0);
    }
    write_text(&cfg.out.join(MANIFEST_FILE), &manifest)?;

    if cfg.text_pairs {
        let dir = cfg.out.join("pairs");
        create_dir(&dir)?;
        for k in 0..ds.len() {
            ds.target_field(k).write(&dir.join(format!("pair_{k:06}.field.txt")))?;
            Observations::new(&model, ds.inputs.column(k).into_owned())?
                .write(&dir.join(format!("pair_{k:06}.obs.txt")))?;
        }
    }
    eprintln!(
        "generated {} pairs ({} jumped) in {}",
        ds.len(),
        ds.jumped(),
        cfg.out.display()
    );
    write_resolved(cfg, &cfg.out)
}
