use crate::error::{Error, Result};
use crate::math::sh::{sh_coeff_count, MAX_SH_DEGREE};

/// Global-space Gaussian attributes in structure-of-arrays layout.
///
/// Rotations are raw quaternions (normalized on read), scales are stored as
/// logarithms and opacities as logits.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GaussianCloud {
    pub means: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    /// `len() * sh_coeff_count(sh_degree)` RGB triples.
    pub sh: Vec<[f64; 3]>,
    pub sh_degree: usize,
}

impl GaussianCloud {
    pub fn new(sh_degree: usize) -> Self {
        Self {
            sh_degree,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn coeffs_per_gaussian(&self) -> usize {
        sh_coeff_count(self.sh_degree)
    }

    pub fn sh_of(&self, i: usize) -> &[[f64; 3]] {
        let k = self.coeffs_per_gaussian();
        &self.sh[i * k..(i + 1) * k]
    }

    pub fn push(&mut self, mean: [f64; 3], rotation: [f64; 4], log_scale: [f64; 3], opacity_logit: f64, sh: &[[f64; 3]]) {
        debug_assert_eq!(sh.len(), self.coeffs_per_gaussian());
        self.means.push(mean);
        self.rotations.push(rotation);
        self.log_scales.push(log_scale);
        self.opacity_logits.push(opacity_logit);
        self.sh.extend_from_slice(sh);
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::invalid(format!("SH degree {} unsupported", self.sh_degree)));
        }
        if self.rotations.len() != n
            || self.log_scales.len() != n
            || self.opacity_logits.len() != n
            || self.sh.len() != n * self.coeffs_per_gaussian()
        {
            return Err(Error::invalid("Gaussian attribute arrays have inconsistent lengths"));
        }
        Ok(())
    }
}
