//! Synthetic data: an animated low-poly head proxy and ground truth rendered
//! from a hidden teacher cloud.

mod proxy;
mod teacher;

use nalgebra::Vector3;

pub use proxy::{make_proxy_sequence, make_proxy_sequence_with, proxy_mesh, ProxyConfig, ProxySequence, BLENDSHAPES};
pub use teacher::{make_teacher, make_teacher_dataset, make_teacher_dataset_with, quantize16, Teacher, TeacherConfig};

use crate::dataset::Dataset;
use crate::error::Result;
use crate::math::Camera;

pub const DESK_FRAMES: usize = 60;
/// Vertex count giving 50 faces after refinement.
pub const DESK_VERTICES: usize = 27;
pub const DESK_RESOLUTION: u32 = 64;
pub const DESK_DISTANCE: f64 = 3.5;
pub const DESK_FOV: f64 = 40.0 * std::f64::consts::PI / 180.0;

/// Camera looking at the proxy's pivot from [`DESK_DISTANCE`].
pub fn desk_camera(resolution: u32) -> Camera {
    Camera::look_at(
        Vector3::new(0.0, 0.0, -DESK_DISTANCE),
        Vector3::zeros(),
        Vector3::new(0.0, 1.0, 0.0),
        DESK_FOV,
        resolution,
        resolution,
    )
    .expect("valid camera")
}

/// The desk-scale dataset: 60 frames of the 50-face proxy at 64×64.
pub fn make_desk_dataset(proxy_seed: u64, teacher_seed: u64) -> Result<Dataset> {
    let proxy = make_proxy_sequence(proxy_seed, DESK_FRAMES, DESK_VERTICES)?;
    Ok(make_teacher_dataset(&proxy, &desk_camera(DESK_RESOLUTION), teacher_seed)?.0)
}

#[cfg(test)]
mod tests;
