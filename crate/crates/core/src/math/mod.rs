//! Rotations, covariances, camera projection, spherical harmonics and
//! positional encoding.
//!
//! Forward maps are generic over the float type; the adjoints used by the
//! training path are written for `f64`.

pub mod camera;
pub mod covariance;
pub mod encoding;
pub mod quat;
pub mod sh;

pub use camera::Camera;
pub use covariance::{
    build_covariance, build_covariance_backward, eigenvalues_2x2, perspective_jacobian, project_covariance,
    project_covariance_backward, project_with_jacobian, LOW_PASS_FLOOR,
};
pub use encoding::{encoded_width, positional_encoding, positional_encoding_backward};
pub use quat::{quat_to_rotmat, UnitQuat};
pub use sh::{eval_sh, eval_sh_backward, sh_basis, sh_coeff_count, ShColor};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn inverse_sigmoid(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
