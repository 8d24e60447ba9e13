use super::mlp::{Gradient, Layer, MlpParameters};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    step: i32,
    first: Vec<Layer>,
    second: Vec<Layer>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &MlpParameters) -> Self {
        let zeros: Vec<Layer> = params
            .layers()
            .iter()
            .map(|l| Layer {
                weights: l.weights.map(|_| 0.0),
                bias: l.bias.map(|_| 0.0),
            })
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn step(&mut self, params: &mut MlpParameters, grad: &Gradient) {
        self.step_with_rate(params, grad, self.config.learning_rate);
    }

    pub fn step_with_rate(&mut self, params: &mut MlpParameters, grad: &Gradient, learning_rate: f64) {
        self.step += 1;
        let AdamConfig {
            beta1, beta2, epsilon, ..
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for k in 0..p.len() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                p[k] -= learning_rate * mhat / (vhat.sqrt() + epsilon);
            }
        };
        for (((layer, g), m), v) in params
            .layers_mut()
            .iter_mut()
            .zip(grad)
            .zip(&mut self.first)
            .zip(&mut self.second)
        {
            update(
                layer.weights.as_mut_slice(),
                g.weights.as_slice(),
                m.weights.as_mut_slice(),
                v.weights.as_mut_slice(),
            );
            update(
                layer.bias.as_mut_slice(),
                g.bias.as_slice(),
                m.bias.as_mut_slice(),
                v.bias.as_mut_slice(),
            );
        }
    }
}
