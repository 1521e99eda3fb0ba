//! Straightforward scalar reimplementations used as references.

use crate::deform::Mlp;
use crate::loss::{gaussian_window, SSIM_C1, SSIM_C2};
use crate::pixels::Image;

/// Layer-by-layer forward pass with explicit loops and no shared kernels.
pub fn naive_mlp_forward(mlp: &Mlp, input: &[f64]) -> Vec<f64> {
    let mut x = input.to_vec();
    let last = mlp.layers.len() - 1;
    for (l, layer) in mlp.layers.iter().enumerate() {
        let mut y = Vec::with_capacity(layer.outputs());
        for o in 0..layer.outputs() {
            let mut acc = layer.bias[o];
            for (i, xi) in x.iter().enumerate() {
                acc += layer.weights[(o, i)] * xi;
            }
            y.push(if l < last { acc.tanh() } else { acc });
        }
        x = y;
    }
    x
}

/// Mean SSIM computed window by window with an explicit 2-D kernel.
pub fn naive_ssim(pred: &Image, target: &Image) -> f64 {
    let k1 = gaussian_window();
    let n = k1.len();
    let mut total = 0.0;
    let mut count = 0usize;
    for c in 0..pred.channels {
        for y0 in 0..=pred.height - n {
            for x0 in 0..=pred.width - n {
                let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for j in 0..n {
                    for i in 0..n {
                        let w = k1[i] * k1[j];
                        let a = pred.at(x0 + i, y0 + j, c);
                        let b = target.at(x0 + i, y0 + j, c);
                        mx += w * a;
                        my += w * b;
                        sxx += w * a * a;
                        syy += w * b * b;
                        sxy += w * a * b;
                    }
                }
                let vx = sxx - mx * mx;
                let vy = syy - my * my;
                let cov = sxy - mx * my;
                total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1;
            }
        }
    }
    total / count as f64
}

/// Scalar Adam in the step-size form: `θ ← θ − α_t·m/(√v + ε̂)` with
/// `α_t = lr·√(1−β₂ᵗ)/(1−β₁ᵗ)` and `ε̂ = ε·√(1−β₂ᵗ)`. Returns the trajectory.
pub fn scalar_adam(theta0: f64, grads: &[f64], lr: f64, b1: f64, b2: f64, eps: f64) -> Vec<f64> {
    let (mut theta, mut m, mut v) = (theta0, 0.0, 0.0);
    let mut out = Vec::with_capacity(grads.len());
    for (t, g) in grads.iter().enumerate() {
        let t = (t + 1) as f64;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v + (1.0 - b2) * g * g;
        let c2 = (1.0 - b2.powf(t)).sqrt();
        let step = lr * c2 / (1.0 - b1.powf(t));
        theta -= step * m / (v.sqrt() + eps * c2);
        out.push(theta);
    }
    out
}

/// Real SH basis up to degree 3 built from associated Legendre polynomials
/// `P_l^m(cos θ)` and `cos(mφ)`, `sin(mφ)`, in the order
/// `m = −l..=l` per band.
pub fn legendre_sh_basis(degree: usize, dir: [f64; 3]) -> Vec<f64> {
    let r = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    let (x, y, z) = (dir[0] / r, dir[1] / r, dir[2] / r);
    let phi = y.atan2(x);
    let mut out = Vec::new();
    for l in 0..=degree as i32 {
        for m in -l..=l {
            let am = m.unsigned_abs() as i32;
            let k = ((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI) * factorial(l - am) / factorial(l + am)).sqrt();
            let p = assoc_legendre(l, am, z);
            let v = match m.cmp(&0) {
                std::cmp::Ordering::Equal => k * p,
                std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * k * (am as f64 * phi).cos() * p,
                std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * k * (am as f64 * phi).sin() * p,
            };
            out.push(v);
        }
    }
    out
}

fn factorial(n: i32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `P_l^m(x)` with the Condon–Shortley phase, by the standard upward
/// recurrence.
fn assoc_legendre(l: i32, m: i32, x: f64) -> f64 {
    let s = (1.0 - x * x).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= -((2 * i - 1) as f64) * s;
    }
    if l == m {
        return pmm;
    }
    let mut pm1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pm1;
    }
    let mut pll = 0.0;
    for ll in m + 2..=l {
        pll = (x * (2 * ll - 1) as f64 * pm1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
        pmm = pm1;
        pm1 = pll;
    }
    pll
}

/// Sample covariance of the screen projection of `samples` draws from the
/// Gaussian `N(mean, Σ)` under the full perspective map.
pub fn monte_carlo_screen_covariance(
    mean: &nalgebra::Vector3<f64>,
    sigma: &nalgebra::Matrix3<f64>,
    cam: &crate::math::Camera,
    samples: usize,
    rng: &mut impl rand::Rng,
) -> nalgebra::Matrix2<f64> {
    use nalgebra::{Matrix2, Vector2, Vector3};
    use rand_distr::StandardNormal;
    let l = sigma.cholesky().expect("covariance is positive definite").l();
    let (cx, cy) = cam.principal_point();
    let (fx, fy) = (cam.focal_x(), cam.focal_y());
    let mut sum = Vector2::zeros();
    let mut sum_sq = Matrix2::zeros();
    for _ in 0..samples {
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let p = cam.world_to_camera(&(mean + l * z));
        let s = Vector2::new(fx * p.x / p.z + cx, fy * p.y / p.z + cy);
        sum += s;
        sum_sq += s * s.transpose();
    }
    let n = samples as f64;
    let mu = sum / n;
    (sum_sq - mu * mu.transpose() * n) / (n - 1.0)
}
