//! Fully connected feedforward network with tanh hidden activations.
//!
//! Flat parameter layout (`η`): layer by layer, each layer's weight matrix
//! in row-major order (`out × in`) followed by its bias vector.

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{seeded_rng, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: Activation,
}

impl MlpArchitecture {
    /// Two hidden layers of 64 tanh units.
    pub fn with_default_hidden(input: usize, output: usize) -> Self {
        Self {
            input,
            hidden: vec![64, 64],
            output,
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.output == 0 || self.hidden.contains(&0) {
            return Err(Error::invalid(format!(
                "all layer widths must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` for every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden.len() + 2);
        dims.push(self.input);
        dims.extend(&self.hidden);
        dims.push(self.output);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn n_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Weights and biases `W_0, b_0, …, W_{L+1}, b_{L+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(arch: &MlpArchitecture) -> Result<Self> {
        arch.validate()?;
        Ok(Self {
            layers: arch
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer {
                    weights: Matrix::zeros(o, i),
                    bias: vec![0.0; o],
                })
                .collect(),
        })
    }

    pub fn architecture(&self) -> MlpArchitecture {
        let first = &self.layers[0];
        MlpArchitecture {
            input: first.weights.cols(),
            hidden: self.layers[..self.layers.len() - 1]
                .iter()
                .map(|l| l.weights.rows())
                .collect(),
            output: self.layers.last().expect("non-empty").weights.rows(),
            activation: Activation::Tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.rows()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut eta = Vec::with_capacity(self.n_params());
        for layer in &self.layers {
            eta.extend_from_slice(layer.weights.as_slice());
            eta.extend_from_slice(&layer.bias);
        }
        eta
    }

    pub fn unflatten(arch: &MlpArchitecture, eta: &[f64]) -> Result<Self> {
        let mut params = Self::zeros(arch)?;
        params.assign(eta)?;
        Ok(params)
    }

    /// Overwrites all parameters from a flat vector.
    pub fn assign(&mut self, eta: &[f64]) -> Result<()> {
        if eta.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, architecture needs {}",
                eta.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.as_mut_slice();
            w.copy_from_slice(&eta[offset..offset + w.len()]);
            offset += w.len();
            let nb = layer.bias.len();
            layer.bias.copy_from_slice(&eta[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    /// True when the output layer is identically zero.
    pub fn has_zero_output_layer(&self) -> bool {
        let last = self.layers.last().expect("non-empty");
        last.weights.as_slice().iter().all(|v| *v == 0.0) && last.bias.iter().all(|v| *v == 0.0)
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "network input has length {}, expected {}",
                z.len(),
                self.input_dim()
            )));
        }
        let mut cache = ForwardCache::new(self);
        let mut out = vec![0.0; self.output_dim()];
        self.forward_cached(z, &mut cache, &mut out);
        Ok(out)
    }

    /// Forward pass that records the layer activations for [`Self::backward`].
    pub fn forward_cached(&self, z: &[f64], cache: &mut ForwardCache, out: &mut [f64]) {
        cache.activations[0].copy_from_slice(z);
        let n = self.layers.len();
        for (li, layer) in self.layers.iter().enumerate() {
            let (prev, rest) = cache.activations.split_at_mut(li + 1);
            let input = &prev[li];
            let target: &mut [f64] = if li + 1 == n { out } else { &mut rest[0] };
            affine(layer, input, target);
            if li + 1 < n {
                for v in target.iter_mut() {
                    *v = v.tanh();
                }
            }
        }
    }

    /// Accumulates `∂L/∂η` into `grad_eta` and writes `∂L/∂z` into
    /// `grad_input`, given `∂L/∂out` and the cache of a forward pass.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &[f64],
        grad_eta: &mut [f64],
        grad_input: &mut [f64],
        scratch: &mut BackwardScratch,
    ) {
        let n = self.layers.len();
        let offsets = &scratch.offsets;
        scratch.delta[n - 1].copy_from_slice(grad_out);
        for li in (0..n).rev() {
            let layer = &self.layers[li];
            let input = &cache.activations[li];
            let (rows, cols) = (layer.weights.rows(), layer.weights.cols());
            let off = offsets[li];
            {
                let delta = &scratch.delta[li];
                let (gw, gb) = grad_eta[off..off + rows * cols + rows].split_at_mut(rows * cols);
                for r in 0..rows {
                    let dr = delta[r];
                    if dr == 0.0 {
                        continue;
                    }
                    gb[r] += dr;
                    for (g, a) in gw[r * cols..(r + 1) * cols].iter_mut().zip(input) {
                        *g += dr * a;
                    }
                }
            }
            // propagate to this layer's input
            let (lower, upper) = scratch.delta.split_at_mut(li);
            let delta = &upper[0];
            let target: &mut [f64] = if li == 0 {
                grad_input
            } else {
                &mut lower[li - 1]
            };
            target.iter_mut().for_each(|v| *v = 0.0);
            let w = layer.weights.as_slice();
            for r in 0..rows {
                let dr = delta[r];
                if dr == 0.0 {
                    continue;
                }
                for (t, wv) in target.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                    *t += dr * wv;
                }
            }
            if li > 0 {
                // through tanh: activations[li] holds tanh outputs of layer li-1
                for (t, a) in target.iter_mut().zip(&cache.activations[li]) {
                    *t *= 1.0 - a * a;
                }
            }
        }
    }
}

#[inline]
fn affine(layer: &Layer, input: &[f64], out: &mut [f64]) {
    let cols = layer.weights.cols();
    let w = layer.weights.as_slice();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = layer.bias[r];
        for (a, b) in row.iter().zip(input) {
            acc += a * b;
        }
        *o = acc;
    }
}

/// Layer activations of one forward pass: the input followed by every
/// hidden layer's tanh output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn new(params: &MlpParams) -> Self {
        let mut activations = vec![vec![0.0; params.input_dim()]];
        for layer in &params.layers[..params.layers.len() - 1] {
            activations.push(vec![0.0; layer.weights.rows()]);
        }
        Self { activations }
    }
}

/// Reusable buffers for [`MlpParams::backward`].
#[derive(Debug, Clone)]
pub struct BackwardScratch {
    delta: Vec<Vec<f64>>,
    offsets: Vec<usize>,
}

impl BackwardScratch {
    pub fn new(params: &MlpParams) -> Self {
        let mut offsets = Vec::with_capacity(params.layers.len());
        let mut off = 0;
        for l in &params.layers {
            offsets.push(off);
            off += l.weights.as_slice().len() + l.bias.len();
        }
        Self {
            delta: params
                .layers
                .iter()
                .map(|l| vec![0.0; l.weights.rows()])
                .collect(),
            offsets,
        }
    }
}

/// Xavier-uniform hidden layers, exactly zero output layer.
pub fn init_xavier_zero_last(arch: &MlpArchitecture, seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(arch)?;
    let mut rng = seeded_rng(seed);
    let n = params.layers.len();
    for layer in &mut params.layers[..n - 1] {
        let (fan_out, fan_in) = (layer.weights.rows(), layer.weights.cols());
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        for w in layer.weights.as_mut_slice() {
            *w = rng.random_range(-bound..bound);
        }
    }
    Ok(params)
}
