use crate::error::{Error, Result};
use crate::pixels::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// A loss value with its gradient with respect to the prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct Graded {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub fn l1_loss(pred: &Image, target: &Image) -> Result<Graded> {
    pred.same_shape(target)?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| {
            let d = p - t;
            value += d.abs();
            if d > 0.0 {
                1.0 / n
            } else if d < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    Ok(Graded { value: value / n, grad })
}

/// `λ·mean((pred − target)²)`.
pub fn weighted_mse(pred: &Image, target: &Image, weight: f64) -> Result<Graded> {
    pred.same_shape(target)?;
    let n = pred.len() as f64;
    let mut value = 0.0;
    let grad = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(p, t)| {
            let d = p - t;
            value += d * d;
            2.0 * weight * d / n
        })
        .collect();
    Ok(Graded {
        value: weight * value / n,
        grad,
    })
}

/// Normalized 1-D Gaussian window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w: [f64; SSIM_WINDOW] = std::array::from_fn(|i| {
        let d = i as f64 - half;
        (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
    });
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable correlation over every fully covered window position.
fn filter_valid(plane: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-size map back to full size.
fn filter_valid_adjoint(map: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut cols = vec![0.0; h * ow];
    for y in 0..oh {
        for x in 0..ow {
            let v = map[y * ow + x];
            for i in 0..n {
                cols[(y + i) * ow + x] += k[i] * v;
            }
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..ow {
            let v = cols[y * ow + x];
            for i in 0..n {
                out[y * w + x + i] += k[i] * v;
            }
        }
    }
    out
}

/// Mean SSIM over all valid windows and channels, with the gradient of that
/// mean with respect to `pred`.
pub fn ssim(pred: &Image, target: &Image) -> Result<Graded> {
    pred.same_shape(target)?;
    let (w, h, ch) = (pred.width, pred.height, pred.channels);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, image is {w}×{h}"
        )));
    }
    let k = gaussian_window();
    let positions = (w + 1 - SSIM_WINDOW) * (h + 1 - SSIM_WINDOW);
    let count = (positions * ch) as f64;
    let mut total = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for c in 0..ch {
        let x = pred.plane(c);
        let y = target.plane(c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let exx = filter_valid(&xx, w, h, &k);
        let eyy = filter_valid(&yy, w, h, &k);
        let exy = filter_valid(&xy, w, h, &k);
        let mut d_mx = vec![0.0; positions];
        let mut d_exx = vec![0.0; positions];
        let mut d_exy = vec![0.0; positions];
        for p in 0..positions {
            let (ux, uy) = (mx[p], my[p]);
            let a1 = 2.0 * ux * uy + SSIM_C1;
            let a2 = 2.0 * (exy[p] - ux * uy) + SSIM_C2;
            let b1 = ux * ux + uy * uy + SSIM_C1;
            let b2 = (exx[p] - ux * ux) + (eyy[p] - uy * uy) + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            d_mx[p] = s * (2.0 * uy / a1 - 2.0 * uy / a2 - 2.0 * ux / b1 + 2.0 * ux / b2) / count;
            d_exx[p] = -s / b2 / count;
            d_exy[p] = 2.0 * s / a2 / count;
        }
        let g_mx = filter_valid_adjoint(&d_mx, w, h, &k);
        let g_exx = filter_valid_adjoint(&d_exx, w, h, &k);
        let g_exy = filter_valid_adjoint(&d_exy, w, h, &k);
        for q in 0..w * h {
            grad[q * ch + c] = g_mx[q] + 2.0 * x[q] * g_exx[q] + y[q] * g_exy[q];
        }
    }
    Ok(Graded {
        value: total / count,
        grad,
    })
}

/// `(1 − SSIM) / 2`.
pub fn dssim_loss(pred: &Image, target: &Image) -> Result<Graded> {
    let s = ssim(pred, target)?;
    Ok(Graded {
        value: (1.0 - s.value) / 2.0,
        grad: s.grad.into_iter().map(|g| -0.5 * g).collect(),
    })
}

/// `(1 − λ)·L1 + λ·D-SSIM`, returned with its two components.
pub fn color_loss(pred: &Image, target: &Image, lambda_ssim: f64) -> Result<(Graded, f64, f64)> {
    let l1 = l1_loss(pred, target)?;
    let ds = dssim_loss(pred, target)?;
    let grad = l1
        .grad
        .iter()
        .zip(&ds.grad)
        .map(|(a, b)| (1.0 - lambda_ssim) * a + lambda_ssim * b)
        .collect();
    let value = (1.0 - lambda_ssim) * l1.value + lambda_ssim * ds.value;
    Ok((Graded { value, grad }, l1.value, ds.value))
}

/// Penalizes differences between the horizontal finite differences of the
/// two images, in both directions: `λ·(mean(Δlr²) + mean(Δrl²))`. With
/// `vertical`, the same terms are added along columns.
pub fn structure_loss(pred: &Image, target: &Image, weight: f64, vertical: bool) -> Result<Graded> {
    pred.same_shape(target)?;
    let (w, h, ch) = (pred.width, pred.height, pred.channels);
    let mut grad = vec![0.0; pred.len()];
    let mut value = 0.0;
    let mut axis = |dx: usize, dy: usize| {
        if w <= dx || h <= dy {
            return;
        }
        let count = ((w - dx) * (h - dy) * ch) as f64;
        let mut sum = 0.0;
        for y in 0..h - dy {
            for x in 0..w - dx {
                for c in 0..ch {
                    let i0 = pred.index(x, y, c);
                    let i1 = pred.index(x + dx, y + dy, c);
                    // Forward difference [−1, 1] and its mirror [1, −1].
                    let lr = (pred.data[i1] - pred.data[i0]) - (target.data[i1] - target.data[i0]);
                    let rl = (pred.data[i0] - pred.data[i1]) - (target.data[i0] - target.data[i1]);
                    sum += lr * lr + rl * rl;
                    let g_lr = 2.0 * weight * lr / count;
                    let g_rl = 2.0 * weight * rl / count;
                    grad[i1] += g_lr - g_rl;
                    grad[i0] += g_rl - g_lr;
                }
            }
        }
        value += weight * sum / count;
    };
    axis(1, 0);
    if vertical {
        axis(0, 1);
    }
    Ok(Graded { value, grad })
}
