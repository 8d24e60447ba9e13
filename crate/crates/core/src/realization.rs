//! Batches of conditional realizations and their point-wise summaries.

use std::fmt::Write as _;

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::grid::{Field, GridSpec};

/// Default two-sided band: 2.5% and 97.5% empirical quantiles.
pub const DEFAULT_BAND_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSummary {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizationBatch {
    grid: GridSpec,
    realizations: Vec<Field>,
    summary: Option<RealizationSummary>,
}

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

impl RealizationBatch {
    pub fn new(grid: GridSpec, realizations: Vec<DVector<f64>>) -> Result<Self> {
        let fields = realizations
            .into_iter()
            .map(|v| Field::new(grid, v))
            .collect::<Result<Vec<_>>>()?;
        let mut batch = Self {
            grid,
            realizations: fields,
            summary: None,
        };
        batch.summary = batch.summarize(DEFAULT_BAND_LEVEL);
        Ok(batch)
    }

    pub fn empty(grid: GridSpec) -> Self {
        Self {
            grid,
            realizations: Vec::new(),
            summary: None,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realizations(&self) -> &[Field] {
        &self.realizations
    }

    /// Point-wise mean, std (n - 1 denominator, zero for a single
    /// realization) and 2.5%/97.5% quantiles. `None` for an empty batch.
    pub fn summary(&self) -> Option<&RealizationSummary> {
        self.summary.as_ref()
    }

    /// Summary with an arbitrary central band level.
    pub fn summarize(&self, level: f64) -> Option<RealizationSummary> {
        let count = self.realizations.len();
        if count == 0 {
            return None;
        }
        let n = self.grid.len();
        let tail = (1.0 - level) / 2.0;
        let mut mean = DVector::zeros(n);
        let mut std = DVector::zeros(n);
        let mut lo = DVector::zeros(n);
        let mut hi = DVector::zeros(n);
        let mut column = vec![0.0; count];
        for k in 0..n {
            for (slot, r) in column.iter_mut().zip(&self.realizations) {
                *slot = r.values()[k];
            }
            let mu = column.iter().sum::<f64>() / count as f64;
            let var = if count > 1 {
                column.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (count - 1) as f64
            } else {
                0.0
            };
            column.sort_by(f64::total_cmp);
            mean[k] = mu;
            std[k] = var.sqrt();
            lo[k] = quantile_sorted(&column, tail);
            hi[k] = quantile_sorted(&column, 1.0 - tail);
        }
        Some(RealizationSummary {
            mean,
            std,
            lo,
            hi,
            level,
        })
    }

    /// CSV with columns `index,mean,std,lo,hi`.
    pub fn summary_csv(&self) -> Result<String> {
        let s = self
            .summary()
            .ok_or_else(|| Error::validation("realization batch", "empty batch has no summary"))?;
        Ok(summary_csv(&s.mean, &s.std, &s.lo, &s.hi))
    }
}

pub fn summary_csv(mean: &DVector<f64>, std: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> String {
    let mut out = String::from("index,mean,std,lo,hi\n");
    for k in 0..mean.len() {
        let _ = writeln!(out, "{k},{},{},{},{}", mean[k], std[k], lo[k], hi[k]);
    }
    out
}

/// Gaussian `mean +- z * std` band for a central `level`.
pub fn gaussian_band(mean: &DVector<f64>, std: &DVector<f64>, level: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    check_dim("band std", mean.len(), std.len())?;
    let z = normal_quantile(level)?;
    Ok((mean - std * z, mean + std * z))
}

/// Two-sided standard-normal critical value for a central `level`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation("band level", format!("{level} outside (0, 1)")));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.0), 1.0);
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 1.0), 5.0);
        assert!((quantile_sorted(&v, 0.1) - 1.4).abs() < 1e-12);
    }

    #[test]
    fn single_and_identical_realizations() {
        let g = GridSpec::new(2, 3, 1.0, 1.0).unwrap();
        let one = RealizationBatch::new(g, vec![DVector::from_element(6, 2.0)]).unwrap();
        let s = one.summary().unwrap();
        assert!(s.std.iter().all(|&v| v == 0.0));
        let same = RealizationBatch::new(g, vec![DVector::from_element(6, -1.0); 5]).unwrap();
        let s = same.summary().unwrap();
        assert_eq!(s.lo, s.hi);
        assert!(RealizationBatch::empty(g).summary().is_none());
        assert!(RealizationBatch::empty(g).summary_csv().is_err());
    }

    #[test]
    fn z_for_95_percent() {
        assert!((normal_quantile(0.95).unwrap() - 1.959_963_984_540_054).abs() < 1e-9);
        assert!(normal_quantile(1.0).is_err());
    }
}
