use ndarray::Array2;

use crate::error::{Error, Result};
use crate::math::quat::normalize_backward;
use crate::raster::{GaussianCloud, GradientBuffer};

/// Residual layout per Gaussian: `δμ (3) | δs (3) | δr (4)`.
pub const RESIDUAL_WIDTH: usize = 10;

/// Adds residuals to a posed cloud: positions and log-scales additively,
/// rotations componentwise followed by renormalization.
///
/// Returns the deformed cloud and the Gaussians whose summed quaternion
/// vanished; those keep their undeformed rotation.
pub fn apply_residuals(base: &GaussianCloud, residuals: &Array2<f64>) -> Result<(GaussianCloud, Vec<usize>)> {
    check_shape(base.len(), residuals)?;
    let mut out = base.clone();
    let mut fallbacks = Vec::new();
    for (i, row) in residuals.rows().into_iter().enumerate() {
        for a in 0..3 {
            out.means[i][a] += row[a];
            out.log_scales[i][a] += row[3 + a];
        }
        let q: [f64; 4] = std::array::from_fn(|c| base.rotations[i][c] + row[6 + c]);
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            out.rotations[i] = q.map(|v| v / norm);
        } else {
            let b = base.rotations[i];
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            out.rotations[i] = b.map(|v| v / bn);
            fallbacks.push(i);
        }
    }
    Ok((out, fallbacks))
}

/// Adjoint of [`apply_residuals`]: gradients for the posed cloud (other
/// attributes pass through unchanged) and for the residual rows.
pub fn apply_residuals_backward(
    base: &GaussianCloud,
    residuals: &Array2<f64>,
    grad: &GradientBuffer,
) -> Result<(GradientBuffer, Array2<f64>)> {
    check_shape(base.len(), residuals)?;
    if grad.len() != base.len() {
        return Err(Error::InvalidState(format!("{} gradients for {} Gaussians", grad.len(), base.len())));
    }
    let mut g_base = grad.clone();
    let mut g_res = Array2::zeros(residuals.raw_dim());
    for (i, row) in residuals.rows().into_iter().enumerate() {
        for a in 0..3 {
            g_res[(i, a)] = grad.means[i][a];
            g_res[(i, 3 + a)] = grad.log_scales[i][a];
        }
        let q: [f64; 4] = std::array::from_fn(|c| base.rotations[i][c] + row[6 + c]);
        let norm = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 && norm.is_finite() {
            let dq = normalize_backward(q.map(|v| v / norm), norm, grad.rotations[i]);
            g_base.rotations[i] = dq;
            for c in 0..4 {
                g_res[(i, 6 + c)] = dq[c];
            }
        } else {
            let b = base.rotations[i];
            let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            g_base.rotations[i] = normalize_backward(b.map(|v| v / bn), bn, grad.rotations[i]);
        }
    }
    Ok((g_base, g_res))
}

fn check_shape(n: usize, residuals: &Array2<f64>) -> Result<()> {
    if residuals.nrows() != n || residuals.ncols() != RESIDUAL_WIDTH {
        return Err(Error::invalid(format!(
            "residuals shaped {}×{}, expected {n}×{RESIDUAL_WIDTH}",
            residuals.nrows(),
            residuals.ncols()
        )));
    }
    Ok(())
}
