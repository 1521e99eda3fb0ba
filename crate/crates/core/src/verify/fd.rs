//! Central finite-difference checking.

use std::fmt;

use rand::Rng;

use crate::binding::{local_to_global, local_to_global_backward, BoundCloud, PosedFaces};
use crate::math::Camera;
use crate::raster::{render, rasterize_backward, GaussianCloud, GradientBuffer, RasterConfig, RenderOutput};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors; gradients below this are compared
/// on an absolute scale.
pub const ABS_FLOOR: f64 = 1e-7;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(ABS_FLOOR)
}

/// Central difference of `f` along coordinate `set(x)`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

#[derive(Clone, Debug, Default)]
pub struct FdReport {
    pub checked: usize,
    /// Coordinates whose ±h evaluations crossed a discontinuity (support
    /// boundary, clamp, early termination) and so have no valid derivative.
    pub skipped: usize,
    pub max_rel: f64,
    pub worst: String,
}

impl FdReport {
    pub fn record(&mut self, label: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let rel = relative_error(analytic, numeric);
        self.checked += 1;
        if rel > self.max_rel || !rel.is_finite() {
            self.max_rel = if rel.is_finite() { rel } else { f64::INFINITY };
            self.worst = format!("{}: analytic {analytic:.6e} vs numeric {numeric:.6e}", label());
        }
    }

    pub fn merge(&mut self, other: FdReport) {
        self.checked += other.checked;
        self.skipped += other.skipped;
        if other.max_rel > self.max_rel {
            self.max_rel = other.max_rel;
            self.worst = other.worst;
        }
    }
}

impl fmt::Display for FdReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} checked, {} skipped at discontinuities, max rel err {:.3e}",
            self.checked, self.skipped, self.max_rel
        )?;
        if !self.worst.is_empty() {
            write!(f, " ({})", self.worst)?;
        }
        Ok(())
    }
}

/// Per-pixel contributor sets together with their clamp state. Two renders
/// with equal signatures lie on the same smooth piece of the render map.
pub fn render_signature(out: &RenderOutput) -> Vec<(u32, u32, bool)> {
    let mut sig = Vec::new();
    for y in 0..out.height {
        for x in 0..out.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            for id in out.pixel_contributors(x, y) {
                let s = &out.splats[id as usize];
                let raw = s.opacity * (-0.5 * s.mahalanobis_sq(px, py)).exp();
                sig.push((y * out.width + x, id, raw > out.config.alpha_clamp));
            }
        }
    }
    sig
}

pub fn cloud_param_count(cloud: &GaussianCloud) -> usize {
    cloud.len() * 11 + cloud.sh.len() * 3
}

/// Mutable access to the `idx`-th scalar of the cloud in a fixed order:
/// means, rotations, log-scales, opacity logits, SH.
pub fn cloud_param_mut(cloud: &mut GaussianCloud, idx: usize) -> &mut f64 {
    let n = cloud.len();
    let mut i = idx;
    if i < 3 * n {
        return &mut cloud.means[i / 3][i % 3];
    }
    i -= 3 * n;
    if i < 4 * n {
        return &mut cloud.rotations[i / 4][i % 4];
    }
    i -= 4 * n;
    if i < 3 * n {
        return &mut cloud.log_scales[i / 3][i % 3];
    }
    i -= 3 * n;
    if i < n {
        return &mut cloud.opacity_logits[i];
    }
    i -= n;
    &mut cloud.sh[i / 3][i % 3]
}

pub fn cloud_grad_at(buf: &GradientBuffer, idx: usize) -> (f64, String) {
    let n = buf.len();
    let mut i = idx;
    if i < 3 * n {
        return (buf.means[i / 3][i % 3], format!("mean[{}][{}]", i / 3, i % 3));
    }
    i -= 3 * n;
    if i < 4 * n {
        return (buf.rotations[i / 4][i % 4], format!("rotation[{}][{}]", i / 4, i % 4));
    }
    i -= 4 * n;
    if i < 3 * n {
        return (buf.log_scales[i / 3][i % 3], format!("log_scale[{}][{}]", i / 3, i % 3));
    }
    i -= 3 * n;
    if i < n {
        return (buf.opacity_logits[i], format!("opacity_logit[{i}]"));
    }
    i -= n;
    (buf.sh[i / 3][i % 3], format!("sh[{}][{}]", i / 3, i % 3))
}

/// Random linear image loss `L = Σ wc·C + Σ wa·A`.
pub struct LinearImageLoss {
    pub color_weights: Vec<f64>,
    pub alpha_weights: Vec<f64>,
}

impl LinearImageLoss {
    pub fn random(rng: &mut impl Rng, pixels: usize) -> Self {
        Self {
            color_weights: (0..3 * pixels).map(|_| rng.random_range(-1.0..1.0)).collect(),
            alpha_weights: (0..pixels).map(|_| rng.random_range(-1.0..1.0)).collect(),
        }
    }

    pub fn value(&self, out: &RenderOutput) -> f64 {
        let c: f64 = out.color.iter().zip(&self.color_weights).map(|(a, b)| a * b).sum();
        let a: f64 = out.alpha.iter().zip(&self.alpha_weights).map(|(a, b)| a * b).sum();
        c + a
    }
}

/// Checks every attribute gradient of `render` against central differences.
pub fn check_render_gradients(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig, rng: &mut impl Rng) -> FdReport {
    let base = render(cloud, cam, cfg);
    let loss = LinearImageLoss::random(rng, base.pixel_count());
    let grads = rasterize_backward(&base, &loss.color_weights, &loss.alpha_weights).expect("backward");
    let base_sig = render_signature(&base);
    let mut report = FdReport::default();
    for idx in 0..cloud_param_count(cloud) {
        let (analytic, label) = cloud_grad_at(&grads, idx);
        let mut plus = cloud.clone();
        *cloud_param_mut(&mut plus, idx) += FD_STEP;
        let mut minus = cloud.clone();
        *cloud_param_mut(&mut minus, idx) -= FD_STEP;
        let out_p = render(&plus, cam, cfg);
        let out_m = render(&minus, cam, cfg);
        if render_signature(&out_p) != base_sig || render_signature(&out_m) != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (loss.value(&out_p) - loss.value(&out_m)) / (2.0 * FD_STEP);
        report.record(|| label, analytic, numeric);
    }
    report
}

/// Checks gradients of every face-local parameter, including the line
/// parameters, through posing and rendering.
pub fn check_bound_gradients(
    cloud: &BoundCloud,
    posed: &PosedFaces,
    cam: &Camera,
    cfg: &RasterConfig,
    rng: &mut impl Rng,
) -> FdReport {
    let render_bound = |c: &BoundCloud| render(&local_to_global(c, posed).expect("pose"), cam, cfg);
    let base = render_bound(cloud);
    let loss = LinearImageLoss::random(rng, base.pixel_count());
    let global_grads = rasterize_backward(&base, &loss.color_weights, &loss.alpha_weights).expect("backward");
    let grads = local_to_global_backward(cloud, posed, &global_grads).expect("binding backward");
    let base_sig = render_signature(&base);
    let attr_count = cloud_param_count(&cloud.attrs);
    let mut report = FdReport::default();
    for idx in 0..attr_count + cloud.len() {
        let (analytic, label) = if idx < attr_count {
            cloud_grad_at(&grads.attrs, idx)
        } else {
            let i = idx - attr_count;
            (grads.n_raw[i], format!("n_raw[{i}]"))
        };
        let nudge = |delta: f64| {
            let mut c = cloud.clone();
            if idx < attr_count {
                *cloud_param_mut(&mut c.attrs, idx) += delta;
            } else {
                c.n_raw[idx - attr_count] += delta;
            }
            render_bound(&c)
        };
        let (out_p, out_m) = (nudge(FD_STEP), nudge(-FD_STEP));
        if render_signature(&out_p) != base_sig || render_signature(&out_m) != base_sig {
            report.skipped += 1;
            continue;
        }
        let numeric = (loss.value(&out_p) - loss.value(&out_m)) / (2.0 * FD_STEP);
        report.record(|| label, analytic, numeric);
    }
    report
}
