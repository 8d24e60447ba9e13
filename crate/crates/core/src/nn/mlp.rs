use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => z.apply(|v| *v = v.max(0.0)),
            Activation::Tanh => z.apply(|v| *v = v.tanh()),
        }
    }

    /// Multiply `delta` by the derivative, given the activation output.
    fn backprop(self, activated: &DMatrix<f64>, delta: &mut DMatrix<f64>) {
        match self {
            Activation::Relu => delta.zip_apply(activated, |d, a| {
                if a <= 0.0 {
                    *d = 0.0
                }
            }),
            Activation::Tanh => delta.zip_apply(activated, |d, a| *d *= 1.0 - a * a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(input_dim: usize, hidden: Vec<usize>, output_dim: usize, activation: Activation) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden,
            output_dim,
            activation,
        };
        if arch.dims().contains(&0) {
            return Err(Error::validation(
                "architecture",
                "every layer width must be at least 1",
            ));
        }
        Ok(arch)
    }

    /// `[input, hidden..., output]`.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden.len() + 2);
        d.push(self.input_dim);
        d.extend_from_slice(&self.hidden);
        d.push(self.output_dim);
        d
    }

    pub fn num_params(&self) -> usize {
        self.dims().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Affine layer `W a + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(inp: usize, out: usize) -> Self {
        Self {
            weights: DMatrix::zeros(out, inp),
            bias: DVector::zeros(out),
        }
    }

    /// Column-by-column product: each output depends only on its own input
    /// column, so results do not vary with batch size.
    fn forward_columns(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = DMatrix::zeros(self.weights.nrows(), a.ncols());
        for (mut zc, ac) in z.column_iter_mut().zip(a.column_iter()) {
            zc.copy_from(&self.bias);
            zc.gemv(1.0, &self.weights, &ac, 1.0);
        }
        z
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

/// Network parameters; hidden layers use the architecture's activation and
/// the output layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    arch: MlpArchitecture,
    layers: Vec<Layer>,
}

/// Same shape as [`MlpParameters`] layers.
pub type Gradient = Vec<Layer>;

impl MlpParameters {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let layers = arch.dims().windows(2).map(|w| Layer::zeros(w[0], w[1])).collect();
        Self {
            arch: arch.clone(),
            layers,
        }
    }

    /// Weights uniform on `(-a, a)` with `a = sqrt(6 / (fan_in + fan_out))`,
    /// biases zero.
    pub fn init_uniform<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Self {
        let mut p = Self::zeros(arch);
        for layer in &mut p.layers {
            let (out, inp) = layer.weights.shape();
            let a = (6.0 / (inp + out) as f64).sqrt();
            // Fill row by row so the draw order matches the row-major
            // checkpoint layout.
            for r in 0..out {
                for c in 0..inp {
                    layer.weights[(r, c)] = rng.random_range(-a..a);
                }
            }
        }
        p
    }

    pub fn from_layers(arch: &MlpArchitecture, layers: Vec<Layer>) -> Result<Self> {
        let dims = arch.dims();
        check_dim("layer count", dims.len() - 1, layers.len())?;
        for (w, l) in dims.windows(2).zip(&layers) {
            check_dim("layer input width", w[0], l.weights.ncols())?;
            check_dim("layer output width", w[1], l.weights.nrows())?;
            check_dim("layer bias", w[1], l.bias.len())?;
        }
        if layers
            .iter()
            .any(|l| l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
        {
            return Err(Error::Numeric("non-finite network parameter".into()));
        }
        Ok(Self {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn architecture(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// All parameters, layer by layer (weights column-major, then bias).
    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Network output for `in x k` inputs. A single input goes through the
    /// same path, so batch and single evaluations agree bit for bit.
    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("network input", self.arch.input_dim, inputs.nrows())?;
        let last = self.layers.len() - 1;
        let mut a = inputs.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            a = layer.forward_columns(&a);
            if k < last {
                self.arch.activation.apply(&mut a);
            }
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("network produced non-finite output".into()));
        }
        Ok(a)
    }

    pub fn forward(&self, input: &DVector<f64>) -> Result<DVector<f64>> {
        let x = DMatrix::from_column_slice(input.len(), 1, input.as_slice());
        let out = self.forward_batch(&x)?;
        Ok(out.column(0).into_owned())
    }

    /// Batch-mean squared error `1/B sum_b ||t_b - f(x_b)||^2` and its
    /// gradient by reverse-mode differentiation.
    pub fn loss_and_gradient(&self, inputs: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<(f64, Gradient)> {
        check_dim("network input", self.arch.input_dim, inputs.nrows())?;
        check_dim("network target", self.arch.output_dim, targets.nrows())?;
        check_dim("batch size", inputs.ncols(), targets.ncols())?;
        let batch = inputs.ncols();
        if batch == 0 {
            return Err(Error::validation("batch", "empty batch"));
        }
        let last = self.layers.len() - 1;

        // activations[k] is the input to layer k.
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(inputs.clone());
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = layer.forward_columns(&activations[k]);
            if k < last {
                self.arch.activation.apply(&mut z);
            }
            activations.push(z);
        }
        let output = &activations[self.layers.len()];
        let mut delta = output - targets;
        let loss = delta.norm_squared() / batch as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric("non-finite loss".into()));
        }
        delta *= 2.0 / batch as f64;

        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let a_in = &activations[k];
            let mut gw = DMatrix::zeros(delta.nrows(), a_in.nrows());
            gw.gemm(1.0, &delta, &a_in.transpose(), 0.0);
            let gb = delta.column_sum();
            if k > 0 {
                let mut prev = DMatrix::zeros(a_in.nrows(), batch);
                prev.gemm(1.0, &self.layers[k].weights.transpose(), &delta, 0.0);
                self.arch.activation.backprop(a_in, &mut prev);
                delta = prev;
            }
            grads.push(Layer { weights: gw, bias: gb });
        }
        grads.reverse();
        Ok((loss, grads))
    }
}
