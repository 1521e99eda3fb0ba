use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows per work unit. Fixed so that reductions over the batch happen in the
/// same order whatever the thread count.
pub const CHUNK_ROWS: usize = 128;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Layer {
    /// `out × in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Fully connected network: tanh on every hidden layer, linear output.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations kept by [`Mlp::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    input: Array2<f64>,
    /// Post-tanh output of each hidden layer.
    hidden: Vec<Array2<f64>>,
}

impl MlpTrace {
    pub fn batch(&self) -> usize {
        self.input.nrows()
    }
}

impl Mlp {
    /// Xavier-uniform hidden layers, zero biases and a zero output layer.
    pub fn new(inputs: usize, hidden_width: usize, hidden_layers: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(hidden_layers + 1);
        let mut fan_in = inputs;
        for _ in 0..hidden_layers {
            let bound = (6.0 / (fan_in + hidden_width) as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, hidden_width);
            layer.weights.mapv_inplace(|_| rng.random_range(-bound..bound));
            layers.push(layer);
            fan_in = hidden_width;
        }
        layers.push(Layer::zeros(fan_in, outputs));
        Self { layers }
    }

    pub fn inputs(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("network has no layers"));
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(Error::invalid(format!(
                    "layer {i} emits {} values, layer {} expects {}",
                    pair[0].outputs(),
                    i + 1,
                    pair[1].inputs()
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.outputs() {
                return Err(Error::invalid(format!("layer {i} bias length mismatch")));
            }
        }
        Ok(())
    }

    pub fn forward(&self, input: Array2<f64>) -> Result<(Array2<f64>, MlpTrace)> {
        if input.ncols() != self.inputs() {
            return Err(Error::invalid(format!(
                "network expects {} inputs per row, got {}",
                self.inputs(),
                input.ncols()
            )));
        }
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut x = input.view().to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = chunked_affine(x.view(), layer);
            if i < last {
                z.mapv_inplace(f64::tanh);
                hidden.push(z.clone());
            }
            x = z;
        }
        Ok((x, MlpTrace { input, hidden }))
    }

    /// Gradients with respect to every parameter and to the input rows.
    pub fn backward(&self, trace: &MlpTrace, grad_output: &Array2<f64>) -> Result<(Mlp, Array2<f64>)> {
        let last = self.layers.len() - 1;
        if trace.hidden.len() != last
            || grad_output.nrows() != trace.batch()
            || grad_output.ncols() != self.outputs()
            || trace.input.ncols() != self.inputs()
        {
            return Err(Error::InvalidState("saved activations do not match this network or gradient".into()));
        }
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut upstream = grad_output.clone();
        for i in (0..=last).rev() {
            let layer = &self.layers[i];
            let below = if i == 0 { trace.input.view() } else { trace.hidden[i - 1].view() };
            grads.push(chunked_weight_grad(upstream.view(), below));
            let mut down = upstream.dot(&layer.weights);
            if i > 0 {
                down.zip_mut_with(&trace.hidden[i - 1], |g, a| *g *= 1.0 - a * a);
            }
            upstream = down;
        }
        grads.reverse();
        Ok((Mlp { layers: grads }, upstream))
    }

    /// Applies `f(param, grad)` to paired parameters of two equally shaped
    /// networks.
    pub fn zip_params(&mut self, other: &Mlp, mut f: impl FnMut(&mut f64, f64)) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.zip_mut_with(&b.weights, |x, y| f(x, *y));
            a.bias.zip_mut_with(&b.bias, |x, y| f(x, *y));
        }
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    pub fn zeros_like(&self) -> Mlp {
        Mlp {
            layers: self.layers.iter().map(|l| Layer::zeros(l.inputs(), l.outputs())).collect(),
        }
    }
}

fn chunks(rows: usize) -> Vec<(usize, usize)> {
    (0..rows.div_ceil(CHUNK_ROWS))
        .map(|c| (c * CHUNK_ROWS, ((c + 1) * CHUNK_ROWS).min(rows)))
        .collect()
}

/// `x · Wᵀ + b`, one chunk of rows at a time.
fn chunked_affine(x: ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let parts: Vec<Array2<f64>> = chunks(x.nrows())
        .into_par_iter()
        .map(|(a, b)| x.slice(s![a..b, ..]).dot(&layer.weights.t()) + &layer.bias)
        .collect();
    let mut out = Array2::zeros((x.nrows(), layer.outputs()));
    for ((a, b), part) in chunks(x.nrows()).into_iter().zip(parts) {
        out.slice_mut(s![a..b, ..]).assign(&part);
    }
    out
}

/// `(gᵀ·x, Σ g)` accumulated chunk by chunk in a fixed order.
fn chunked_weight_grad(upstream: ArrayView2<f64>, below: ArrayView2<f64>) -> Layer {
    let parts: Vec<Layer> = chunks(upstream.nrows())
        .into_par_iter()
        .map(|(a, b)| {
            let g = upstream.slice(s![a..b, ..]);
            Layer {
                weights: g.t().dot(&below.slice(s![a..b, ..])),
                bias: g.sum_axis(Axis(0)),
            }
        })
        .collect();
    let mut total = Layer::zeros(below.ncols(), upstream.ncols());
    for p in parts {
        total.weights += &p.weights;
        total.bias += &p.bias;
    }
    total
}
