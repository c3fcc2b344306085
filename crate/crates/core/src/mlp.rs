//! Small fully connected network mapping an edge-attribute vector to a weight.
//!
//! Hidden layers use SiLU; the last layer is affine and its output goes
//! through an [`OutputMap`]. Inputs are z-scored with stored statistics.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SIZES: [usize; 7] = [3, 128, 32, 32, 32, 32, 1];

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputMap {
    /// Keeps weights positive.
    #[default]
    Softplus,
    /// Raw network output; weights may go negative.
    Identity,
}

impl OutputMap {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            OutputMap::Softplus => softplus(x),
            OutputMap::Identity => x,
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            OutputMap::Softplus => sigmoid(x),
            OutputMap::Identity => 1.0,
        }
    }
}

/// `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *slot = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub output: OutputMap,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    rows: usize,
    /// Input of each layer, `rows x inputs`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each layer, `rows x outputs`.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(sizes: &[usize], output: OutputMap, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let limit = (6.0 / (inputs + outputs) as f64).sqrt();
                Layer {
                    inputs,
                    outputs,
                    weights: (0..inputs * outputs)
                        .map(|_| rng.gen_range(-limit..limit))
                        .collect(),
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Self::with_layers(layers, output, sizes[0])
    }

    pub fn zeros(sizes: &[usize], output: OutputMap) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                inputs: w[0],
                outputs: w[1],
                weights: vec![0.0; w[0] * w[1]],
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self::with_layers(layers, output, sizes[0])
    }

    fn with_layers(layers: Vec<Layer>, output: OutputMap, inputs: usize) -> Self {
        Self {
            layers,
            output,
            input_mean: vec![0.0; inputs],
            input_std: vec![1.0; inputs],
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    /// Set the z-score statistics; zero or non-finite deviations become 1.
    pub fn set_standardization(&mut self, mean: Vec<f64>, std: Vec<f64>) {
        self.input_std = std
            .into_iter()
            .map(|s| if s.is_finite() && s > 1e-12 { s } else { 1.0 })
            .collect();
        self.input_mean = mean;
    }

    /// Shapes consistent with each other and all parameters finite.
    pub fn validate(&self) -> Result<()> {
        let mut prev = self.input_dim();
        if self.input_mean.len() != prev || self.input_std.len() != prev {
            return Err(Error::Config("standardization length mismatch".into()));
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.inputs != prev || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Config(format!("layer {k} has inconsistent shape")));
            }
            if l.weights.iter().chain(&l.bias).any(|x| !x.is_finite()) {
                return Err(Error::Config(format!("layer {k} has non-finite parameters")));
            }
            prev = l.outputs;
        }
        if prev != 1 {
            return Err(Error::Config("last layer must have one output".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Layer by layer: weights (row-major) then biases.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                actual: flat.len(),
            });
        }
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&flat[at..at + nw]);
            at += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&flat[at..at + nb]);
            at += nb;
        }
        Ok(())
    }

    fn standardize(&self, x: &[f64], out: &mut [f64]) {
        for (k, slot) in out.iter_mut().enumerate() {
            *slot = (x[k] - self.input_mean[k]) / self.input_std[k];
        }
    }

    /// Raw (pre output map) network value for one input.
    pub fn raw(&self, x: &[f64]) -> f64 {
        let mut cur = vec![0.0; self.input_dim()];
        self.standardize(x, &mut cur);
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut next = vec![0.0; l.outputs];
            l.forward(&cur, &mut next);
            if k < last {
                next.iter_mut().for_each(|v| *v = silu(*v));
            }
            cur = next;
        }
        cur[0]
    }

    pub fn forward(&self, x: &[f64]) -> f64 {
        self.output.apply(self.raw(x))
    }

    /// Outputs for every row of `xs`, plus the activations for backprop.
    pub fn forward_batch(&self, xs: &[[f64; 3]]) -> (Vec<f64>, MlpCache) {
        let rows = xs.len();
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let d0 = self.input_dim();
        let mut cur = vec![0.0; rows * d0];
        for (r, x) in xs.iter().enumerate() {
            self.standardize(x, &mut cur[r * d0..(r + 1) * d0]);
        }
        // a rows x width row-major buffer is a width x rows column-major matrix
        for (k, l) in self.layers.iter().enumerate() {
            let x = DMatrix::from_vec(l.inputs, rows, cur);
            let w = DMatrix::from_row_slice(l.outputs, l.inputs, &l.weights);
            let mut z = DMatrix::from_fn(l.outputs, rows, |o, _| l.bias[o]);
            z.gemm(1.0, &w, &x, 1.0);
            let z: Vec<f64> = z.data.into();
            let next = if k < last {
                z.iter().map(|&v| silu(v)).collect()
            } else {
                z.clone()
            };
            inputs.push(x.data.into());
            pre.push(z);
            cur = next;
        }
        let out = cur.iter().map(|&v| self.output.apply(v)).collect();
        (out, MlpCache { rows, inputs, pre })
    }

    /// Gradient of `sum_r gbar[r] * out[r]` with respect to
    /// [`params_flat`](Self::params_flat).
    pub fn backward_batch(&self, cache: &MlpCache, gbar: &[f64]) -> Result<Vec<f64>> {
        if gbar.len() != cache.rows || cache.pre.len() != self.layers.len() {
            return Err(Error::DimensionMismatch {
                expected: cache.rows,
                actual: gbar.len(),
            });
        }
        let rows = cache.rows;
        let last = self.layers.len() - 1;
        // dL/dz of the current layer, outputs x rows
        let mut delta = DMatrix::from_iterator(
            1,
            rows,
            gbar.iter()
                .zip(&cache.pre[last])
                .map(|(g, &z)| g * self.output.derivative(z)),
        );
        let mut grads: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(self.layers.len());
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let x = DMatrix::from_column_slice(l.inputs, rows, &cache.inputs[k]);
            let gw = &delta * x.transpose();
            let gb: Vec<f64> = (0..l.outputs).map(|o| delta.row(o).sum()).collect();
            // row-major weights gradient
            let gw_flat: Vec<f64> = gw.transpose().data.into();
            if k > 0 {
                let w = DMatrix::from_row_slice(l.outputs, l.inputs, &l.weights);
                let mut next = w.transpose() * &delta;
                for (slot, &z) in next.iter_mut().zip(&cache.pre[k - 1]) {
                    *slot *= silu_grad(z);
                }
                delta = next;
            }
            grads.push((gw_flat, gb));
        }
        let mut flat = Vec::with_capacity(self.num_params());
        for (gw, gb) in grads.into_iter().rev() {
            flat.extend(gw);
            flat.extend(gb);
        }
        Ok(flat)
    }
}
