use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moments for one parameter family, stored as `rows × width`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamGroup {
    pub width: usize,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamGroup {
    pub fn new(rows: usize, width: usize) -> Self {
        Self {
            width,
            m: vec![0.0; rows * width],
            v: vec![0.0; rows * width],
            step: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len().checked_div(self.width).unwrap_or(0)
    }

    /// One bias-corrected update over a flat parameter slice.
    pub fn update(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::InvalidState(format!("{} gradients for {} parameters", grads.len(), params.len())));
        }
        self.update_iter(params.iter_mut(), grads.iter().copied(), grads.len(), lr)
    }

    /// Same as [`update`](Self::update) for parameters reachable only through
    /// iterators, such as network weights.
    pub fn update_iter<'a>(
        &mut self,
        params: impl Iterator<Item = &'a mut f64>,
        grads: impl Iterator<Item = f64>,
        len: usize,
        lr: f64,
    ) -> Result<()> {
        if len != self.m.len() {
            return Err(Error::InvalidState(format!(
                "optimizer holds {} moments for {} parameters",
                self.m.len(),
                len
            )));
        }
        self.step += 1;
        let bc1 = 1.0 - BETA1.powi(self.step as i32);
        let bc2 = 1.0 - BETA2.powi(self.step as i32);
        let mut count = 0;
        for ((p, g), (m, v)) in params.zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + EPSILON);
            count += 1;
        }
        if count != len {
            return Err(Error::InvalidState(format!("{count} parameters updated, expected {len}")));
        }
        Ok(())
    }

    /// Re-indexes rows after densification: row `j` takes the moments of
    /// `source[j]`, or zeros for a newborn.
    pub fn remap(&mut self, source: &[Option<usize>]) {
        let w = self.width;
        let mut m = vec![0.0; source.len() * w];
        let mut v = vec![0.0; source.len() * w];
        for (j, s) in source.iter().enumerate() {
            if let Some(i) = s {
                m[j * w..(j + 1) * w].copy_from_slice(&self.m[i * w..(i + 1) * w]);
                v[j * w..(j + 1) * w].copy_from_slice(&self.v[i * w..(i + 1) * w]);
            }
        }
        self.m = m;
        self.v = v;
    }

    pub fn zero_moments(&mut self) {
        self.m.fill(0.0);
        self.v.fill(0.0);
    }
}

pub(crate) fn ensure_finite(name: &str, grads: &[f64]) -> Result<()> {
    match grads.iter().position(|g| !g.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{name} gradient entry {i} is {}", grads[i]))),
        None => Ok(()),
    }
}
