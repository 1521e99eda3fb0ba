//! Per-Gaussian projection to screen space and its adjoint.

use nalgebra::{Matrix2, Matrix3, Vector3};
use rayon::prelude::*;

use super::cloud::GaussianCloud;
use super::ScreenGradients;
use crate::math::covariance::{
    build_covariance, build_covariance_backward, eigenvalues_2x2, project_covariance, project_covariance_backward,
};
use crate::math::sh::{eval_sh, eval_sh_backward};
use crate::math::{sigmoid, Camera};

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectedSplat {
    /// Mean in pixel coordinates.
    pub mean: [f64; 2],
    /// Screen covariance Σ' (px²), floor included.
    pub cov: [f64; 3],
    /// Inverse of `cov` as `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    /// Camera-space depth.
    pub depth: f64,
    /// Footprint radius in pixels; 0 means culled.
    pub radius: u32,
    pub color: [f64; 3],
    /// Post-sigmoid opacity.
    pub opacity: f64,
}

impl ProjectedSplat {
    pub const CULLED: Self = Self {
        mean: [0.0; 2],
        cov: [0.0; 3],
        conic: [0.0; 3],
        depth: 0.0,
        radius: 0,
        color: [0.0; 3],
        opacity: 0.0,
    };

    pub fn is_visible(&self) -> bool {
        self.radius > 0
    }

    /// Squared Mahalanobis distance of a pixel-space point from the mean.
    #[inline]
    pub fn mahalanobis_sq(&self, x: f64, y: f64) -> f64 {
        let dx = x - self.mean[0];
        let dy = y - self.mean[1];
        let [a, b, c] = self.conic;
        a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
    }

    /// Inclusive range of pixel indices whose centers lie in `[m - r, m + r]`
    /// along one axis, clipped to `0..size`. `None` if empty.
    pub fn pixel_span(mean: f64, radius: u32, size: u32) -> Option<(u32, u32)> {
        let r = radius as f64;
        let lo = (mean - r - 0.5).ceil().max(0.0);
        let hi = (mean + r - 0.5).floor().min(size as f64 - 1.0);
        if radius == 0 || lo > hi {
            None
        } else {
            Some((lo as u32, hi as u32))
        }
    }
}

/// Projects a single Gaussian. Culls points outside `(near, far]`, invalid
/// rotations and footprints that cover no pixel center.
pub fn project_one(cloud: &GaussianCloud, i: usize, cam: &Camera) -> ProjectedSplat {
    let mean_world = Vector3::from(cloud.means[i]);
    let mean_cam = cam.world_to_camera(&mean_world);
    if !(mean_cam.z > cam.near && mean_cam.z <= cam.far) {
        return ProjectedSplat::CULLED;
    }
    let scale = Vector3::from(cloud.log_scales[i]).map(f64::exp);
    let Ok(sigma) = build_covariance(&scale, cloud.rotations[i]) else {
        return ProjectedSplat::CULLED;
    };
    let sigma_cam = cam.rotation * sigma * cam.rotation.transpose();
    let Some(cov) = project_covariance(&sigma_cam, &mean_cam, cam) else {
        return ProjectedSplat::CULLED;
    };
    let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(0, 1)];
    if !(det > 0.0) || !det.is_finite() {
        return ProjectedSplat::CULLED;
    }
    let (lambda_max, _) = eigenvalues_2x2(&cov);
    let radius = (3.0 * lambda_max.sqrt()).ceil();
    let (cx, cy) = cam.principal_point();
    let mean = [
        cam.focal_x() * mean_cam.x / mean_cam.z + cx,
        cam.focal_y() * mean_cam.y / mean_cam.z + cy,
    ];
    if !(radius.is_finite() && radius < u32::MAX as f64 && mean[0].is_finite() && mean[1].is_finite()) {
        return ProjectedSplat::CULLED;
    }
    let radius = radius as u32;
    if ProjectedSplat::pixel_span(mean[0], radius, cam.width).is_none()
        || ProjectedSplat::pixel_span(mean[1], radius, cam.height).is_none()
    {
        return ProjectedSplat::CULLED;
    }
    let view_dir = mean_world - cam.center();
    let rgb = eval_sh(cloud.sh_degree, cloud.sh_of(i), &view_dir);
    ProjectedSplat {
        mean,
        cov: [cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]],
        conic: [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det],
        depth: mean_cam.z,
        radius,
        color: [rgb.x, rgb.y, rgb.z],
        opacity: sigmoid(cloud.opacity_logits[i]),
    }
}

/// Projects every Gaussian of the cloud.
pub fn project_all(cloud: &GaussianCloud, cam: &Camera) -> Vec<ProjectedSplat> {
    (0..cloud.len()).into_par_iter().map(|i| project_one(cloud, i, cam)).collect()
}

/// Per-Gaussian gradients with respect to the global attributes of a cloud.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientBuffer {
    pub means: Vec<[f64; 3]>,
    pub rotations: Vec<[f64; 4]>,
    pub log_scales: Vec<[f64; 3]>,
    pub opacity_logits: Vec<f64>,
    pub sh: Vec<[f64; 3]>,
    /// Norm of the screen-space mean gradient in NDC units, for this view.
    pub viewspace_grad: Vec<f64>,
    /// Whether the Gaussian was visible (radius > 0) in this view.
    pub visible: Vec<bool>,
}

impl GradientBuffer {
    pub fn zeros(n: usize, coeffs_per_gaussian: usize) -> Self {
        Self {
            means: vec![[0.0; 3]; n],
            rotations: vec![[0.0; 4]; n],
            log_scales: vec![[0.0; 3]; n],
            opacity_logits: vec![0.0; n],
            sh: vec![[0.0; 3]; n * coeffs_per_gaussian],
            viewspace_grad: vec![0.0; n],
            visible: vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.means.iter().flatten().all(|v| v.is_finite())
            && self.rotations.iter().flatten().all(|v| v.is_finite())
            && self.log_scales.iter().flatten().all(|v| v.is_finite())
            && self.opacity_logits.iter().all(|v| v.is_finite())
            && self.sh.iter().flatten().all(|v| v.is_finite())
            && self.viewspace_grad.iter().all(|v| v.is_finite() && *v >= 0.0)
    }
}

struct OneGradient {
    mean: [f64; 3],
    rotation: [f64; 4],
    log_scale: [f64; 3],
    opacity_logit: f64,
    sh: Vec<[f64; 3]>,
    viewspace: f64,
}

fn project_one_backward(
    cloud: &GaussianCloud,
    i: usize,
    cam: &Camera,
    splat: &ProjectedSplat,
    sg: &ScreenGradients,
) -> OneGradient {
    let k = cloud.coeffs_per_gaussian();
    let mut out = OneGradient {
        mean: [0.0; 3],
        rotation: [0.0; 4],
        log_scale: [0.0; 3],
        opacity_logit: 0.0,
        sh: vec![[0.0; 3]; k],
        viewspace: 0.0,
    };
    if !splat.is_visible() {
        return out;
    }
    let mean_world = Vector3::from(cloud.means[i]);
    let mean_cam = cam.world_to_camera(&mean_world);

    // Color through SH.
    let view_dir = mean_world - cam.center();
    let grad_rgb = Vector3::from(sg.color[i]);
    let mut grad_mean_world = eval_sh_backward(cloud.sh_degree, cloud.sh_of(i), &view_dir, &grad_rgb, &mut out.sh);

    // Opacity through the sigmoid.
    let o = splat.opacity;
    out.opacity_logit = sg.opacity[i] * o * (1.0 - o);

    // Screen mean.
    let (fx, fy) = (cam.focal_x(), cam.focal_y());
    let [gu, gv] = sg.mean[i];
    let z = mean_cam.z;
    let mut grad_mean_cam = Vector3::new(
        gu * fx / z,
        gv * fy / z,
        -gu * fx * mean_cam.x / (z * z) - gv * fy * mean_cam.y / (z * z),
    );
    out.viewspace = ((gu * cam.width as f64 * 0.5).powi(2) + (gv * cam.height as f64 * 0.5).powi(2)).sqrt();

    // Conic → screen covariance: dΣ' = -K Ĝ K.
    let [ga, gb, gc] = sg.conic[i];
    let conic = Matrix2::new(splat.conic[0], splat.conic[1], splat.conic[1], splat.conic[2]);
    let g_conic = Matrix2::new(ga, 0.5 * gb, 0.5 * gb, gc);
    let g_cov2 = -(conic * g_conic * conic);

    let scale = Vector3::from(cloud.log_scales[i]).map(f64::exp);
    let sigma = build_covariance(&scale, cloud.rotations[i]).expect("visible splat has a valid covariance");
    let sigma_cam = cam.rotation * sigma * cam.rotation.transpose();
    let (g_sigma_cam, g_mean_from_cov) = project_covariance_backward(&sigma_cam, &mean_cam, cam, &g_cov2);
    grad_mean_cam += g_mean_from_cov;
    let g_sigma: Matrix3<f64> = cam.rotation.transpose() * g_sigma_cam * cam.rotation;
    let (g_scale, g_rot) =
        build_covariance_backward(&scale, cloud.rotations[i], &g_sigma).expect("visible splat has a valid rotation");

    grad_mean_world += cam.rotation.transpose() * grad_mean_cam;
    out.mean = grad_mean_world.into();
    out.rotation = g_rot;
    out.log_scale = [g_scale.x * scale.x, g_scale.y * scale.y, g_scale.z * scale.z];
    out
}

/// Pulls screen-space gradients back to the cloud's global attributes.
pub fn project_backward(
    cloud: &GaussianCloud,
    cam: &Camera,
    splats: &[ProjectedSplat],
    screen: &ScreenGradients,
) -> GradientBuffer {
    let k = cloud.coeffs_per_gaussian();
    let per: Vec<OneGradient> = (0..cloud.len())
        .into_par_iter()
        .map(|i| project_one_backward(cloud, i, cam, &splats[i], screen))
        .collect();
    let mut buf = GradientBuffer::zeros(cloud.len(), k);
    for (i, g) in per.into_iter().enumerate() {
        buf.means[i] = g.mean;
        buf.rotations[i] = g.rotation;
        buf.log_scales[i] = g.log_scale;
        buf.opacity_logits[i] = g.opacity_logit;
        buf.sh[i * k..(i + 1) * k].copy_from_slice(&g.sh);
        buf.viewspace_grad[i] = g.viewspace;
        buf.visible[i] = splats[i].is_visible();
    }
    buf
}
