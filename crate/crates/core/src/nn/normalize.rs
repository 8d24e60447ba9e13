use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};

/// Per-component input standardization and a shift-and-scale map for
/// targets: `x_norm = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub input_mean: DVector<f64>,
    pub input_scale: DVector<f64>,
    pub output_shift: DVector<f64>,
    pub output_scale: f64,
}

const SCALE_FLOOR: f64 = 1e-12;

impl Normalization {
    pub fn identity(input_dim: usize, output_dim: usize) -> Self {
        Self {
            input_mean: DVector::zeros(input_dim),
            input_scale: DVector::from_element(input_dim, 1.0),
            output_shift: DVector::zeros(output_dim),
            output_scale: 1.0,
        }
    }

    /// Statistics of column-wise training data. Targets are shifted by
    /// `output_shift` (typically the prior mean), or by their own mean when
    /// `None`, and divided by the global standard deviation of the shifted
    /// entries.
    pub fn fit(inputs: &DMatrix<f64>, targets: &DMatrix<f64>, output_shift: Option<&DVector<f64>>) -> Result<Self> {
        check_dim("normalization pairs", inputs.ncols(), targets.ncols())?;
        let count = inputs.ncols().max(1) as f64;
        let input_mean = inputs.column_mean();
        let input_scale = DVector::from_iterator(
            inputs.nrows(),
            inputs.row_iter().zip(input_mean.iter()).map(|(row, mu)| {
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
                let sd = var.sqrt();
                if sd > SCALE_FLOOR {
                    sd
                } else {
                    1.0
                }
            }),
        );
        let output_shift = match output_shift {
            Some(s) => {
                check_dim("output shift", targets.nrows(), s.len())?;
                s.clone()
            }
            None => targets.column_mean(),
        };
        let total = (targets.nrows() * targets.ncols()).max(1) as f64;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for col in targets.column_iter() {
            for (v, s) in col.iter().zip(output_shift.iter()) {
                let d = v - s;
                sum += d;
                sum_sq += d * d;
            }
        }
        let mean = sum / total;
        let sd = (sum_sq / total - mean * mean).max(0.0).sqrt();
        Ok(Self {
            input_mean,
            input_scale,
            output_shift,
            output_scale: if sd > SCALE_FLOOR { sd } else { 1.0 },
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.output_shift.len()
    }

    pub fn normalize_inputs(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("normalized input", self.input_dim(), inputs.nrows())?;
        let mut out = inputs.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.input_mean;
            col.component_div_assign(&self.input_scale);
        }
        Ok(out)
    }

    pub fn normalize_targets(&self, targets: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("normalized target", self.output_dim(), targets.nrows())?;
        let mut out = targets.clone();
        for mut col in out.column_iter_mut() {
            col -= &self.output_shift;
            col /= self.output_scale;
        }
        Ok(out)
    }

    pub fn denormalize_outputs(&self, outputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("network output", self.output_dim(), outputs.nrows())?;
        let mut out = outputs * self.output_scale;
        for mut col in out.column_iter_mut() {
            col += &self.output_shift;
        }
        Ok(out)
    }

    pub fn denormalize_inputs(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("normalized input", self.input_dim(), inputs.nrows())?;
        let mut out = inputs.clone();
        for mut col in out.column_iter_mut() {
            col.component_mul_assign(&self.input_scale);
            col += &self.input_mean;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip(data in proptest::collection::vec(-100.0f64..100.0, 24), shift in -5.0f64..5.0) {
            let inputs = DMatrix::from_vec(3, 8, data[..24].to_vec());
            let targets = DMatrix::from_fn(2, 8, |r, c| data[(r * 8 + c) % 24] * 0.5 + shift);
            let norm = Normalization::fit(&inputs, &targets, None).unwrap();
            let back = norm.denormalize_inputs(&norm.normalize_inputs(&inputs).unwrap()).unwrap();
            prop_assert!((back - &inputs).amax() <= 1e-12 * inputs.amax().max(1.0));
            let back = norm.denormalize_outputs(&norm.normalize_targets(&targets).unwrap()).unwrap();
            prop_assert!((back - &targets).amax() <= 1e-12 * targets.amax().max(1.0));
        }
    }

    #[test]
    fn constant_components_keep_unit_scale() {
        let inputs = DMatrix::from_element(2, 5, 3.0);
        let targets = DMatrix::from_element(1, 5, 1.0);
        let n = Normalization::fit(&inputs, &targets, None).unwrap();
        assert_eq!(n.input_scale, DVector::from_element(2, 1.0));
        assert_eq!(n.output_scale, 1.0);
    }
}
