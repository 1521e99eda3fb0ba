//! Training objectives and their gradients.

mod image;

pub use image::{
    color_loss, dssim_loss, gaussian_window, l1_loss, ssim, structure_loss, weighted_mse, Graded, SSIM_C1, SSIM_C2,
    SSIM_SIGMA, SSIM_WINDOW,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pixels::Image;

/// How the scale regularizers reduce their entries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reduction {
    #[default]
    Mean,
    /// Euclidean norm of the entry vector.
    Norm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_ssim: f64,
    pub lambda_alpha: f64,
    pub lambda_st: f64,
    pub lambda_invis: f64,
    pub lambda_scale: f64,
    /// Floor of the scale-threshold term.
    pub xi: f64,
    /// Also penalize vertical image-gradient differences.
    pub vertical_structure: bool,
    pub reduction: Reduction,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda_ssim: 0.4,
            lambda_alpha: 0.5,
            lambda_st: 0.3,
            lambda_invis: 0.3,
            lambda_scale: 0.15,
            xi: 0.15,
            vertical_structure: false,
            reduction: Reduction::Mean,
        }
    }
}

impl LossConfig {
    pub fn color(&self, l1: f64, dssim: f64) -> f64 {
        (1.0 - self.lambda_ssim) * l1 + self.lambda_ssim * dssim
    }

    /// Weighted total; `alpha` and `st` already carry their own weights.
    pub fn total(&self, color: f64, alpha: f64, st: f64, invis: f64, scale: f64) -> f64 {
        color + alpha + st + self.lambda_invis * invis + self.lambda_scale * scale
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub total: f64,
    pub color: f64,
    pub l1: f64,
    pub dssim: f64,
    pub st: f64,
    pub alpha: f64,
    pub invis: f64,
    pub scale: f64,
}

impl LossReport {
    pub fn is_finite(&self) -> bool {
        [self.total, self.color, self.l1, self.dssim, self.st, self.alpha, self.invis, self.scale]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// Gradients of the total loss.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGradients {
    /// With respect to the predicted color image.
    pub color: Vec<f64>,
    /// With respect to the predicted alpha map.
    pub alpha: Vec<f64>,
    /// With respect to the regularized (post-activation) scales.
    pub scales: Vec<[f64; 3]>,
}

fn reduce(entries: &[f64], count: usize, reduction: Reduction) -> (f64, Vec<f64>) {
    match reduction {
        Reduction::Mean => {
            if count == 0 {
                return (0.0, vec![0.0; entries.len()]);
            }
            let n = count as f64;
            (entries.iter().sum::<f64>() / n, vec![1.0 / n; entries.len()])
        }
        Reduction::Norm => {
            let norm = entries.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                return (0.0, vec![0.0; entries.len()]);
            }
            (norm, entries.iter().map(|v| v / norm).collect())
        }
    }
}

fn check_mask(scales: &[[f64; 3]], invisible: &[bool]) -> Result<()> {
    if scales.len() != invisible.len() {
        return Err(Error::invalid(format!(
            "{} scales but {} visibility flags",
            scales.len(),
            invisible.len()
        )));
    }
    Ok(())
}

/// Magnitude of the scales of invisible Gaussians (mask set).
pub fn invisible_scale_reg(scales: &[[f64; 3]], invisible: &[bool], reduction: Reduction) -> Result<(f64, Vec<[f64; 3]>)> {
    check_mask(scales, invisible)?;
    let entries: Vec<f64> = scales
        .iter()
        .zip(invisible)
        .filter(|(_, m)| **m)
        .flat_map(|(s, _)| s.iter().map(|v| v.abs()))
        .collect();
    let (value, d) = reduce(&entries, entries.len(), reduction);
    let mut grad = vec![[0.0; 3]; scales.len()];
    let mut k = 0;
    for (i, s) in scales.iter().enumerate() {
        if invisible[i] {
            for a in 0..3 {
                grad[i][a] = d[k] * s[a].signum();
                k += 1;
            }
        }
    }
    Ok((value, grad))
}

/// `max((1 − M)·s, ξ)` over every scale entry: visible scales above the
/// floor are penalized, everything else contributes the floor.
pub fn scale_threshold_reg(
    scales: &[[f64; 3]],
    invisible: &[bool],
    xi: f64,
    reduction: Reduction,
) -> Result<(f64, Vec<[f64; 3]>)> {
    check_mask(scales, invisible)?;
    let entries: Vec<f64> = scales
        .iter()
        .zip(invisible)
        .flat_map(|(s, m)| s.map(|v| if *m { xi.max(0.0) } else { v.max(xi) }))
        .collect();
    let (value, d) = reduce(&entries, entries.len(), reduction);
    let grad = scales
        .iter()
        .enumerate()
        .map(|(i, s)| std::array::from_fn(|a| if !invisible[i] && s[a] > xi { d[3 * i + a] } else { 0.0 }))
        .collect();
    Ok((value, grad))
}

/// All terms on one frame.
///
/// `pred`/`target` are color images composited over the same background;
/// `scales` are the regularized per-Gaussian scales and `invisible` the mask
/// of Gaussians culled in this frame.
pub fn total_loss(
    config: &LossConfig,
    pred: &Image,
    target: &Image,
    pred_alpha: &Image,
    target_alpha: &Image,
    scales: &[[f64; 3]],
    invisible: &[bool],
) -> Result<(LossReport, LossGradients)> {
    let (color, l1, dssim) = color_loss(pred, target, config.lambda_ssim)?;
    let st = structure_loss(pred, target, config.lambda_st, config.vertical_structure)?;
    let alpha = weighted_mse(pred_alpha, target_alpha, config.lambda_alpha)?;
    let (invis, g_invis) = invisible_scale_reg(scales, invisible, config.reduction)?;
    let (scale, g_scale) = scale_threshold_reg(scales, invisible, config.xi, config.reduction)?;
    let report = LossReport {
        total: config.total(color.value, alpha.value, st.value, invis, scale),
        color: color.value,
        l1,
        dssim,
        st: st.value,
        alpha: alpha.value,
        invis,
        scale,
    };
    if !report.is_finite() {
        return Err(Error::NonFinite(format!("loss terms {report:?}")));
    }
    let grads = LossGradients {
        color: color.grad.iter().zip(&st.grad).map(|(a, b)| a + b).collect(),
        alpha: alpha.grad,
        scales: g_invis
            .iter()
            .zip(&g_scale)
            .map(|(a, b)| std::array::from_fn(|k| config.lambda_invis * a[k] + config.lambda_scale * b[k]))
            .collect(),
    };
    Ok((report, grads))
}

#[cfg(test)]
mod tests;
