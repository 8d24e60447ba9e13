//! Error metrics, cross-sections, uncertainty maps and the multi-method
//! benchmark harness.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::estimator::PosteriorMeanEstimator;
use crate::grid::{Field, GridCoord, GridSpec};
use crate::kriging::{GaussianPrior, Kriging, NoiseScaling, PosteriorGaussian};
use crate::nn::sample_posterior_dnn;
use crate::observation::ObservationModel;
use crate::realization::{gaussian_band, RealizationBatch, DEFAULT_BAND_LEVEL};
use crate::rng::derive_seed;
use crate::synthetic::JumpSpec;
use crate::tv::{tv_map, TvConfig};

pub fn rmse(estimate: &Field, reference: &Field) -> Result<f64> {
    estimate.check_same_grid(reference)?;
    let n = estimate.values().len() as f64;
    Ok(((estimate.values() - reference.values()).norm_squared() / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    /// Fixed column; profile runs over rows (offshore distance).
    AcrossShore,
    /// Fixed row; profile runs over columns.
    AlongShore,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::AcrossShore => "across-shore",
            Axis::AlongShore => "along-shore",
        }
    }
}

/// A 1-D profile. Bands are present for batch or Gaussian inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub axis: Axis,
    pub index: usize,
    /// Physical coordinate of each point along the profile.
    pub position: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Option<Vec<f64>>,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

fn section_coords(grid: &GridSpec, axis: Axis, index: usize) -> Result<Vec<GridCoord>> {
    let (limit, len) = match axis {
        Axis::AcrossShore => (grid.cols(), grid.rows()),
        Axis::AlongShore => (grid.rows(), grid.cols()),
    };
    if index >= limit {
        return Err(Error::validation(
            "section index",
            format!("{index} out of range for {} ({limit} available)", axis.name()),
        ));
    }
    Ok((0..len)
        .map(|k| match axis {
            Axis::AcrossShore => GridCoord::new(k, index),
            Axis::AlongShore => GridCoord::new(index, k),
        })
        .collect())
}

fn take(grid: &GridSpec, coords: &[GridCoord], v: &DVector<f64>) -> Vec<f64> {
    coords.iter().map(|c| v[c.i * grid.cols() + c.j]).collect()
}

fn positions(grid: &GridSpec, axis: Axis, coords: &[GridCoord]) -> Vec<f64> {
    coords
        .iter()
        .map(|&c| {
            let (x, y) = grid.position(c);
            match axis {
                Axis::AcrossShore => x,
                Axis::AlongShore => y,
            }
        })
        .collect()
}

pub fn extract_section(field: &Field, axis: Axis, index: usize) -> Result<Section> {
    let grid = field.grid();
    let coords = section_coords(grid, axis, index)?;
    Ok(Section {
        axis,
        index,
        position: positions(grid, axis, &coords),
        mean: take(grid, &coords, field.values()),
        std: None,
        lo: None,
        hi: None,
    })
}

/// Point-wise mean, std and empirical quantile band of a batch along a
/// profile.
pub fn extract_section_batch(batch: &RealizationBatch, axis: Axis, index: usize) -> Result<Section> {
    let grid = batch.grid();
    let coords = section_coords(grid, axis, index)?;
    let s = batch
        .summary()
        .ok_or_else(|| Error::validation("realization batch", "empty batch has no section"))?;
    Ok(Section {
        axis,
        index,
        position: positions(grid, axis, &coords),
        mean: take(grid, &coords, &s.mean),
        std: Some(take(grid, &coords, &s.std)),
        lo: Some(take(grid, &coords, &s.lo)),
        hi: Some(take(grid, &coords, &s.hi)),
    })
}

/// Gaussian `mean +- z std` band along a profile.
pub fn extract_section_gaussian(
    mean: &Field,
    std: &DVector<f64>,
    level: f64,
    axis: Axis,
    index: usize,
) -> Result<Section> {
    let grid = mean.grid();
    check_dim("section std", grid.len(), std.len())?;
    let coords = section_coords(grid, axis, index)?;
    let (lo, hi) = gaussian_band(mean.values(), std, level)?;
    Ok(Section {
        axis,
        index,
        position: positions(grid, axis, &coords),
        mean: take(grid, &coords, mean.values()),
        std: Some(take(grid, &coords, std)),
        lo: Some(take(grid, &coords, &lo)),
        hi: Some(take(grid, &coords, &hi)),
    })
}

pub fn std_map_batch(batch: &RealizationBatch) -> Result<Field> {
    let s = batch
        .summary()
        .ok_or_else(|| Error::validation("realization batch", "empty batch has no std map"))?;
    Field::new(*batch.grid(), s.std.clone())
}

pub fn std_map_gaussian(post: &PosteriorGaussian) -> Result<Field> {
    Field::new(*post.mean.grid(), post.std_dev())
}

/// Fraction of points with `lo <= reference <= hi`.
pub fn coverage_bands(lo: &DVector<f64>, hi: &DVector<f64>, reference: &Field) -> Result<f64> {
    let r = reference.values();
    check_dim("band lower bound", r.len(), lo.len())?;
    check_dim("band upper bound", r.len(), hi.len())?;
    if r.is_empty() {
        return Err(Error::validation("coverage", "empty field"));
    }
    let inside = (0..r.len()).filter(|&k| lo[k] <= r[k] && r[k] <= hi[k]).count();
    Ok(inside as f64 / r.len() as f64)
}

pub fn coverage_batch(batch: &RealizationBatch, reference: &Field, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("band level", format!("{level} outside (0, 1)")));
    }
    reference.check_grid(batch.grid())?;
    let s = batch
        .summarize(level)
        .ok_or_else(|| Error::validation("realization batch", "empty batch has no bands"))?;
    coverage_bands(&s.lo, &s.hi, reference)
}

pub fn coverage_gaussian(mean: &Field, std: &DVector<f64>, reference: &Field, level: f64) -> Result<f64> {
    mean.check_same_grid(reference)?;
    let (lo, hi) = gaussian_band(mean.values(), std, level)?;
    coverage_bands(&lo, &hi, reference)
}

/// Estimator shared across benchmark workers.
pub type SharedEstimator = Arc<dyn PosteriorMeanEstimator + Send + Sync>;

#[derive(Clone)]
pub enum Method {
    /// Posterior mean with Gaussian bands from the posterior covariance.
    Kriging,
    /// Network estimate with bands from network-driven bootstrap draws.
    Dnn(SharedEstimator),
    /// Network estimate corrected by the Kriging update; Gaussian bands.
    DnnKriging(SharedEstimator),
    /// Total-variation point estimate started at the Kriging mean; no bands.
    Tv(TvConfig),
}

impl std::fmt::Debug for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Kriging => f.write_str("Kriging"),
            Method::Dnn(_) => f.write_str("Dnn"),
            Method::DnnKriging(_) => f.write_str("DnnKriging"),
            Method::Tv(c) => write!(f, "Tv({c:?})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TestSurvey {
    pub id: String,
    pub truth: Field,
    pub jump: Option<JumpSpec>,
}

impl TestSurvey {
    /// Section indices: through the jump center when present, otherwise
    /// the domain mid-lines. Returns `(column for across-shore, row for
    /// along-shore)`.
    pub fn section_indices(&self) -> (usize, usize) {
        let g = self.truth.grid();
        match &self.jump {
            Some(j) => {
                let c = j.center(g);
                (c.j, c.i)
            }
            None => (g.cols() / 2, g.rows() / 2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub noise: NoiseScaling,
    pub band_level: f64,
    /// Network bootstrap draws per survey for bands; 0 skips them.
    pub dnn_samples: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            noise: NoiseScaling(0.0),
            band_level: DEFAULT_BAND_LEVEL,
            dnn_samples: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub survey: String,
    pub method: String,
    pub rmse: f64,
    /// Band coverage of the truth; `None` for methods without bands.
    pub coverage: Option<f64>,
    /// `(y - Hx)^T R^-1 (y - Hx)` of the estimate.
    pub misfit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SectionRow {
    pub survey: String,
    pub method: String,
    pub section: Section,
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub methods: Vec<String>,
    pub surveys: Vec<String>,
    /// Survey-major, methods in registration order.
    pub rows: Vec<BenchmarkRow>,
    pub sections: Vec<SectionRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl BenchmarkReport {
    pub fn row(&self, survey: &str, method: &str) -> Option<&BenchmarkRow> {
        self.rows.iter().find(|r| r.survey == survey && r.method == method)
    }

    pub fn rmse_column(&self, method: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.rmse)
            .collect()
    }

    pub fn mean_rmse(&self, method: &str) -> Option<f64> {
        let v = self.rmse_column(method);
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn mean_coverage(&self, method: &str) -> Option<f64> {
        let v: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.coverage)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Surveys on which `a` has strictly lower RMSE than `b`.
    pub fn wins(&self, a: &str, b: &str) -> usize {
        self.surveys
            .iter()
            .filter(|s| match (self.row(s, a), self.row(s, b)) {
                (Some(x), Some(y)) => x.rmse < y.rmse,
                _ => false,
            })
            .count()
    }

    pub fn report_csv(&self) -> String {
        let mut out = String::from("survey,method,rmse,coverage,misfit\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.survey,
                r.method,
                r.rmse,
                fmt_opt(r.coverage),
                r.misfit
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,mean_rmse,mean_coverage,surveys\n");
        for m in &self.methods {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                m,
                fmt_opt(self.mean_rmse(m)),
                fmt_opt(self.mean_coverage(m)),
                self.rmse_column(m).len()
            );
        }
        out
    }

    pub fn sections_csv(&self) -> String {
        let mut out = String::from("survey,method,axis,index,position,mean,lo,hi,reference\n");
        for s in &self.sections {
            let sec = &s.section;
            for k in 0..sec.mean.len() {
                let lo = sec.lo.as_ref().map(|v| v[k]);
                let hi = sec.hi.as_ref().map(|v| v[k]);
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    s.survey,
                    s.method,
                    sec.axis.name(),
                    sec.index,
                    sec.position[k],
                    sec.mean[k],
                    fmt_opt(lo),
                    fmt_opt(hi),
                    s.reference[k]
                );
            }
        }
        out
    }
}

/// An estimate plus an optional band source.
enum Bands {
    None,
    Gaussian(DVector<f64>),
    Batch(RealizationBatch),
}

struct MethodOutput {
    estimate: Field,
    bands: Bands,
}

/// Simulates measurements of every survey (noise stream keyed by survey
/// position), runs each method, and collects RMSE, coverage, misfit and
/// sections. Surveys run concurrently; the report order is fixed.
pub fn run_benchmark(
    surveys: &[TestSurvey],
    methods: &[(String, Method)],
    prior: &GaussianPrior,
    model: &ObservationModel,
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    if methods.is_empty() {
        return Err(Error::Config("benchmark needs at least one method".into()));
    }
    for (k, (name, _)) in methods.iter().enumerate() {
        if name.is_empty() || name.contains(',') || methods[..k].iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("invalid or duplicate method name {name:?}")));
        }
    }
    for s in surveys {
        s.truth.check_grid(prior.grid())?;
    }
    let kriging = Kriging::new(prior, model, config.noise)?;
    let post_std = kriging.posterior_covariance().diagonal().map(|v| v.max(0.0).sqrt());
    let noise_seed = derive_seed(config.seed, "benchmark-noise");
    let sample_seed = derive_seed(config.seed, "benchmark-samples");

    let per_survey = surveys
        .par_iter()
        .enumerate()
        .map(|(si, survey)| {
            let y = model.observe(&survey.truth, Some(noise_seed.wrapping_add(si as u64)))?;
            let (col, row) = survey.section_indices();
            let mut rows = Vec::with_capacity(methods.len());
            let mut sections = Vec::with_capacity(2 * methods.len());
            for (name, method) in methods {
                let out = run_method(method, &kriging, &post_std, &y, config, sample_seed, si)?;
                let coverage = match &out.bands {
                    Bands::None => None,
                    Bands::Gaussian(std) => {
                        Some(coverage_gaussian(&out.estimate, std, &survey.truth, config.band_level)?)
                    }
                    Bands::Batch(b) => Some(coverage_batch(b, &survey.truth, config.band_level)?),
                };
                rows.push(BenchmarkRow {
                    survey: survey.id.clone(),
                    method: name.clone(),
                    rmse: rmse(&out.estimate, &survey.truth)?,
                    coverage,
                    misfit: model.weighted_misfit(&y, out.estimate.values(), config.noise.0)?,
                });
                for (axis, index) in [(Axis::AcrossShore, col), (Axis::AlongShore, row)] {
                    let mut section = match &out.bands {
                        Bands::None => extract_section(&out.estimate, axis, index)?,
                        Bands::Gaussian(std) => {
                            extract_section_gaussian(&out.estimate, std, config.band_level, axis, index)?
                        }
                        Bands::Batch(b) => {
                            let mut s = extract_section_batch(b, axis, index)?;
                            let band = b.summarize(config.band_level).expect("non-empty batch");
                            let coords = section_coords(b.grid(), axis, index)?;
                            s.lo = Some(take(b.grid(), &coords, &band.lo));
                            s.hi = Some(take(b.grid(), &coords, &band.hi));
                            s
                        }
                    };
                    // The profile shows the method's point estimate.
                    section.mean = extract_section(&out.estimate, axis, index)?.mean;
                    sections.push(SectionRow {
                        survey: survey.id.clone(),
                        method: name.clone(),
                        reference: extract_section(&survey.truth, axis, index)?.mean,
                        section,
                    });
                }
            }
            Ok((rows, sections))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut sections = Vec::new();
    for (r, s) in per_survey {
        rows.extend(r);
        sections.extend(s);
    }
    Ok(BenchmarkReport {
        methods: methods.iter().map(|(n, _)| n.clone()).collect(),
        surveys: surveys.iter().map(|s| s.id.clone()).collect(),
        rows,
        sections,
    })
}

fn run_method(
    method: &Method,
    kriging: &Kriging,
    post_std: &DVector<f64>,
    y: &DVector<f64>,
    config: &BenchmarkConfig,
    sample_seed: u64,
    survey_index: usize,
) -> Result<MethodOutput> {
    let grid = *kriging.prior().grid();
    Ok(match method {
        Method::Kriging => MethodOutput {
            estimate: kriging.posterior_mean(y)?,
            bands: Bands::Gaussian(post_std.clone()),
        },
        Method::Dnn(est) => {
            let estimate = Field::new(grid, est.estimate(y)?)?;
            let bands = if config.dnn_samples > 0 {
                Bands::Batch(sample_posterior_dnn(
                    est.as_ref(),
                    kriging.prior(),
                    kriging.model(),
                    config.noise,
                    y,
                    config.dnn_samples,
                    sample_seed.wrapping_add(survey_index as u64),
                )?)
            } else {
                Bands::None
            };
            MethodOutput { estimate, bands }
        }
        Method::DnnKriging(est) => {
            let dnn_mean = Field::new(grid, est.estimate(y)?)?;
            let corrected = kriging.update(dnn_mean.values(), y)?;
            MethodOutput {
                estimate: Field::new(grid, corrected)?,
                bands: Bands::Gaussian(post_std.clone()),
            }
        }
        Method::Tv(cfg) => {
            let init = kriging.posterior_mean(y)?;
            let cfg = TvConfig {
                theta2: config.noise.0,
                ..*cfg
            };
            let (estimate, _) = tv_map(y, kriging.model(), &cfg, &init)?;
            MethodOutput {
                estimate,
                bands: Bands::None,
            }
        }
    })
}
