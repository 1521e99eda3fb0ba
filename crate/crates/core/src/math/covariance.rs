//! 3D covariance construction and its perspective projection to screen space.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, RealField, Vector3};

use super::camera::Camera;
use super::quat::{quat_to_rotmat, quat_to_rotmat_backward};
use crate::error::{Error, Result};

/// Isotropic term (px²) added to every projected covariance.
pub const LOW_PASS_FLOOR: f64 = 0.3;

/// Screen-space tangents are clamped to this multiple of `tan(fov / 2)`
/// before the Jacobian is formed.
pub const TANGENT_CLAMP: f64 = 1.3;

fn symmetrized<T: RealField + Copy>(m: Matrix3<T>) -> Matrix3<T> {
    let mut out = m;
    for i in 0..3 {
        for j in (i + 1)..3 {
            out[(j, i)] = m[(i, j)];
        }
    }
    out
}

/// `Σ = R · diag(s)² · Rᵀ` for a positive scale vector and raw quaternion.
pub fn build_covariance<T: RealField + Copy>(scale: &Vector3<T>, raw_q: [T; 4]) -> Result<Matrix3<T>> {
    if scale.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::invalid("covariance scale components must be positive"));
    }
    let r = quat_to_rotmat(raw_q)?;
    let m = r * Matrix3::from_diagonal(scale);
    Ok(symmetrized(m * m.transpose()))
}

/// Adjoint of [`build_covariance`]: returns (dL/dscale, dL/draw_q).
pub fn build_covariance_backward(
    scale: &Vector3<f64>,
    raw_q: [f64; 4],
    grad_sigma: &Matrix3<f64>,
) -> Result<(Vector3<f64>, [f64; 4])> {
    let r = quat_to_rotmat(raw_q)?;
    let m = r * Matrix3::from_diagonal(scale);
    let grad_m = (grad_sigma + grad_sigma.transpose()) * m;
    let grad_scale = Vector3::from_fn(|j, _| (0..3).map(|i| grad_m[(i, j)] * r[(i, j)]).sum());
    let grad_r = grad_m * Matrix3::from_diagonal(scale);
    let grad_q = quat_to_rotmat_backward(raw_q, &grad_r)?;
    Ok((grad_scale, grad_q))
}

/// Tangent clamp limits `(x/z, y/z)` for a camera.
fn tangent_limits(cam: &Camera) -> (f64, f64) {
    (
        TANGENT_CLAMP * (cam.fov_x * 0.5).tan(),
        TANGENT_CLAMP * (cam.fov_y * 0.5).tan(),
    )
}

/// First-order Jacobian of `(fx·x/z, fy·y/z)` at a camera-space point, with
/// the tangents clamped to the widened frustum.
pub fn perspective_jacobian<T: RealField + Copy>(mean_cam: &Vector3<T>, cam: &Camera) -> Matrix2x3<T> {
    let (lim_x, lim_y) = tangent_limits(cam);
    let (lim_x, lim_y): (T, T) = (nalgebra::convert(lim_x), nalgebra::convert(lim_y));
    let fx: T = nalgebra::convert(cam.focal_x());
    let fy: T = nalgebra::convert(cam.focal_y());
    let z = mean_cam.z;
    let u = (mean_cam.x / z).clamp(-lim_x, lim_x);
    let v = (mean_cam.y / z).clamp(-lim_y, lim_y);
    Matrix2x3::new(fx / z, T::zero(), -fx * u / z, T::zero(), fy / z, -fy * v / z)
}

/// `J Σ Jᵀ` for an arbitrary linear screen map, without the low-pass floor.
pub fn project_with_jacobian<T: RealField + Copy>(sigma: &Matrix3<T>, jacobian: &Matrix2x3<T>) -> Matrix2<T> {
    let mut out = jacobian * sigma * jacobian.transpose();
    out[(1, 0)] = out[(0, 1)];
    out
}

/// Projects a camera-space covariance to a screen-space (px²) covariance.
///
/// Returns `None` for points at or behind the near plane.
pub fn project_covariance<T: RealField + Copy>(
    sigma_cam: &Matrix3<T>,
    mean_cam: &Vector3<T>,
    cam: &Camera,
) -> Option<Matrix2<T>> {
    let near: T = nalgebra::convert(cam.near);
    if !(mean_cam.z > near) {
        return None;
    }
    let jac = perspective_jacobian(mean_cam, cam);
    let floor: T = nalgebra::convert(LOW_PASS_FLOOR);
    Some(project_with_jacobian(sigma_cam, &jac) + Matrix2::identity() * floor)
}

/// Adjoint of [`project_covariance`]: returns (dL/dΣ_cam, dL/dμ_cam).
pub fn project_covariance_backward(
    sigma_cam: &Matrix3<f64>,
    mean_cam: &Vector3<f64>,
    cam: &Camera,
    grad_cov2: &Matrix2<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let jac = perspective_jacobian(mean_cam, cam);
    let grad_sigma = jac.transpose() * grad_cov2 * jac;
    let grad_jac: Matrix2x3<f64> = (grad_cov2 + grad_cov2.transpose()) * jac * sigma_cam;

    let (lim_x, lim_y) = tangent_limits(cam);
    let (fx, fy) = (cam.focal_x(), cam.focal_y());
    let (x, y, z) = (mean_cam.x, mean_cam.y, mean_cam.z);
    let z2 = z * z;
    let mut grad_mean = Vector3::zeros();

    grad_mean.z += grad_jac[(0, 0)] * (-fx / z2) + grad_jac[(1, 1)] * (-fy / z2);
    let u = x / z;
    if u.abs() <= lim_x {
        // J02 = -fx·x/z²
        grad_mean.x += grad_jac[(0, 2)] * (-fx / z2);
        grad_mean.z += grad_jac[(0, 2)] * (2.0 * fx * x / (z2 * z));
    } else {
        let uc = u.clamp(-lim_x, lim_x);
        grad_mean.z += grad_jac[(0, 2)] * (fx * uc / z2);
    }
    let v = y / z;
    if v.abs() <= lim_y {
        grad_mean.y += grad_jac[(1, 2)] * (-fy / z2);
        grad_mean.z += grad_jac[(1, 2)] * (2.0 * fy * y / (z2 * z));
    } else {
        let vc = v.clamp(-lim_y, lim_y);
        grad_mean.z += grad_jac[(1, 2)] * (fy * vc / z2);
    }
    (grad_sigma, grad_mean)
}

/// Eigenvalues `(λ_max, λ_min)` of a symmetric 2×2 matrix.
pub fn eigenvalues_2x2(m: &Matrix2<f64>) -> (f64, f64) {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let disc = (half_diff * half_diff + m[(0, 1)] * m[(0, 1)]).sqrt();
    (mid + disc, mid - disc)
}
