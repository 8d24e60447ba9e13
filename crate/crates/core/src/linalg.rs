//! Dense SPD factorizations.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Maximum number of jitter doublings after the first failed attempt.
pub const MAX_JITTER_DOUBLINGS: u32 = 8;

/// Cholesky factor `A + jitter*I = L L^T`, remembering the jitter used.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl SpdFactor {
    /// Factor `matrix`, first as given, then with `base_jitter * 2^k` added to
    /// the diagonal for `k = 0..=8`. A zero `base_jitter` falls back to
    /// `1e-10` times the mean diagonal.
    pub fn new(matrix: DMatrix<f64>, base_jitter: f64) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::Dimension {
                context: "cholesky input (square)",
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("cholesky input contains non-finite entries".into()));
        }
        if let Some(chol) = Cholesky::new(matrix.clone()) {
            return Ok(Self { chol, jitter: 0.0 });
        }
        let n = matrix.nrows();
        let mean_diag = if n == 0 { 1.0 } else { matrix.trace() / n as f64 };
        let base = if base_jitter > 0.0 {
            base_jitter
        } else {
            1e-10 * mean_diag.abs().max(f64::MIN_POSITIVE)
        };
        let mut jitter = base;
        for _ in 0..=MAX_JITTER_DOUBLINGS {
            let mut shifted = matrix.clone();
            for k in 0..n {
                shifted[(k, k)] += jitter;
            }
            if let Some(chol) = Cholesky::new(shifted) {
                return Ok(Self { chol, jitter });
            }
            jitter *= 2.0;
        }
        let diag = matrix.diagonal();
        Err(Error::Numeric(format!(
            "matrix of order {n} not positive definite after jitter {:.3e}; diagonal range [{:.3e}, {:.3e}]",
            jitter / 2.0,
            diag.min(),
            diag.max()
        )))
    }

    /// Factor with jitter always applied, starting at `jitter` and doubling
    /// on failure.
    pub fn with_jitter(matrix: DMatrix<f64>, jitter: f64) -> Result<Self> {
        let n = matrix.nrows();
        let mut shifted = matrix;
        let mut current = jitter;
        for k in 0..n {
            shifted[(k, k)] += current;
        }
        for _ in 0..=MAX_JITTER_DOUBLINGS {
            if let Some(chol) = Cholesky::new(shifted.clone()) {
                return Ok(Self { chol, jitter: current });
            }
            for k in 0..n {
                shifted[(k, k)] += current;
            }
            current *= 2.0;
        }
        Err(Error::Numeric(format!(
            "covariance of order {n} not positive definite after jitter {:.3e}",
            current / 2.0
        )))
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn order(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Lower-triangular factor.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Lower factor with unspecified upper triangle; only read the lower part.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    /// `L^-1 b`.
    pub fn solve_lower(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    pub fn solve_lower_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut out = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut out);
        out
    }

    /// `L u` using only the lower triangle.
    pub fn mul_lower(&self, u: &DVector<f64>) -> DVector<f64> {
        let l = self.chol.l_dirty();
        let n = l.nrows();
        let mut out = DVector::zeros(n);
        for j in 0..n {
            let uj = u[j];
            if uj == 0.0 {
                continue;
            }
            let col = l.column(j);
            for i in j..n {
                out[i] += col[i] * uj;
            }
        }
        out
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}
