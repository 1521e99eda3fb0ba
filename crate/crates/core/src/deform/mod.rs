//! Condition-driven residual network.
//!
//! An MLP maps the positional encoding of each Gaussian's canonical position,
//! concatenated with the frame's condition vector, to additive residuals on
//! position, log-scale and rotation.

mod mlp;
mod residual;

use ndarray::Array2;
use rand::Rng;

pub use mlp::{Layer, Mlp, MlpTrace, CHUNK_ROWS};
pub use residual::{apply_residuals, apply_residuals_backward, RESIDUAL_WIDTH};

use crate::error::{Error, Result};
use crate::math::{encoded_width, positional_encoding};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DeformerConfig {
    pub hidden_layers: usize,
    pub hidden_width: usize,
    /// Octaves of the positional encoding.
    pub frequencies: usize,
}

impl Default for DeformerConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_width: 256,
            frequencies: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Deformer {
    pub mlp: Mlp,
    pub frequencies: usize,
    pub condition_dim: usize,
}

impl Deformer {
    pub fn new(config: &DeformerConfig, condition_dim: usize, rng: &mut impl Rng) -> Self {
        let inputs = encoded_width(config.frequencies) + condition_dim;
        Self {
            mlp: Mlp::new(inputs, config.hidden_width, config.hidden_layers, RESIDUAL_WIDTH, rng),
            frequencies: config.frequencies,
            condition_dim,
        }
    }

    /// One row per Gaussian: `[γ(μ₀), ρ]`.
    pub fn encode(&self, canonical: &[[f64; 3]], condition: &[f64]) -> Result<Array2<f64>> {
        if condition.len() != self.condition_dim {
            return Err(Error::invalid(format!(
                "condition vector has {} entries, network expects {}",
                condition.len(),
                self.condition_dim
            )));
        }
        let enc = encoded_width(self.frequencies);
        let mut input = Array2::zeros((canonical.len(), enc + self.condition_dim));
        for (i, p) in canonical.iter().enumerate() {
            let gamma = positional_encoding(p, self.frequencies);
            let mut row = input.row_mut(i);
            for (j, v) in gamma.into_iter().chain(condition.iter().copied()).enumerate() {
                row[j] = v;
            }
        }
        Ok(input)
    }

    pub fn forward(&self, canonical: &[[f64; 3]], condition: &[f64]) -> Result<(Array2<f64>, MlpTrace)> {
        self.mlp.forward(self.encode(canonical, condition)?)
    }

    /// Parameter gradients for the given residual gradients. The canonical
    /// inputs are constants, so their gradient is discarded.
    pub fn backward(&self, trace: &MlpTrace, grad_residuals: &Array2<f64>) -> Result<Mlp> {
        Ok(self.mlp.backward(trace, grad_residuals)?.0)
    }
}
