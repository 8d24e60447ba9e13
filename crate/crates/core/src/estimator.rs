//! Posterior-mean estimators `y -> E[X | Y = y]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};
use crate::grid::Field;
use crate::kriging::Kriging;

pub trait PosteriorMeanEstimator: Sync {
    fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>>;

    /// Column-wise estimates for `m x k` inputs.
    fn estimate_batch(&self, ys: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let cols = ys
            .column_iter()
            .map(|c| self.estimate(&c.into_owned()))
            .collect::<Result<Vec<_>>>()?;
        if cols.is_empty() {
            return Ok(DMatrix::zeros(0, 0));
        }
        Ok(DMatrix::from_columns(&cols))
    }
}

/// The exact Kriging map `mu + Lambda (y - H mu)`.
pub struct KrigingMean<'a>(pub &'a Kriging);

impl PosteriorMeanEstimator for KrigingMean<'_> {
    fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        self.0.update(self.0.prior().mean().values(), y)
    }
}

/// Ignores the data.
pub struct ConstantMean(pub Field);

impl PosteriorMeanEstimator for ConstantMean {
    fn estimate(&self, _y: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.0.values().clone())
    }
}

/// An affine map `offset + matrix * y`.
pub struct AffineMap {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl PosteriorMeanEstimator for AffineMap {
    fn estimate(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim("affine map input", self.matrix.ncols(), y.len())?;
        Ok(&self.offset + &self.matrix * y)
    }
}
