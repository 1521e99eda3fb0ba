//! Random scenes for the oracle suites.

use nalgebra::Vector3;
use rand::Rng;

use crate::binding::{init_plrf, triangle_area, BoundCloud, PlrfInit, TriangleMesh};
use crate::math::sh::sh_coeff_count;
use crate::math::Camera;
use crate::raster::GaussianCloud;

/// Camera at distance 4 on -z looking at the origin.
pub fn micro_camera(size: u32) -> Camera {
    Camera::look_at(
        Vector3::new(0.0, 0.0, -4.0),
        Vector3::zeros(),
        Vector3::new(0.0, 1.0, 0.0),
        0.8,
        size,
        size,
    )
    .expect("valid camera")
}

/// Random cloud kept inside the view, away from the opacity clamp and with
/// non-negative SH colors, so every attribute is differentiable almost
/// everywhere.
pub fn random_cloud(rng: &mut impl Rng, count: usize, sh_degree: usize, spread: f64) -> GaussianCloud {
    let mut cloud = GaussianCloud::new(sh_degree);
    let k = sh_coeff_count(sh_degree);
    for _ in 0..count {
        let mean = [
            rng.random_range(-spread..spread),
            rng.random_range(-spread..spread),
            rng.random_range(-0.6..0.6),
        ];
        let rotation: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let log_scale: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.08f64..0.35).ln());
        let opacity_logit = rng.random_range(-1.5..2.0);
        let sh: Vec<[f64; 3]> = (0..k)
            .map(|j| {
                let amp = if j == 0 { 0.8 } else { 0.15 };
                std::array::from_fn(|_| rng.random_range(-amp..amp))
            })
            .collect();
        cloud.push(mean, rotation, log_scale, opacity_logit, &sh);
    }
    cloud
}

/// Random triangles in front of [`micro_camera`], bound with randomized
/// local attributes and line parameters.
pub fn random_bound_scene(rng: &mut impl Rng, faces: usize, sh_degree: usize) -> (TriangleMesh, BoundCloud) {
    loop {
        let mut vertices = Vec::with_capacity(3 * faces);
        let mut tris = Vec::with_capacity(faces);
        for f in 0..faces {
            for _ in 0..3 {
                vertices.push([
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.5..0.5),
                ]);
            }
            let b = 3 * f as u32;
            tris.push([b, b + 1, b + 2]);
        }
        let Ok(mesh) = TriangleMesh::new(vertices, tris) else { continue };
        if (0..faces).any(|f| {
            let [a, b, c] = mesh.corners(f);
            triangle_area(&a, &b, &c) < 0.1
        }) {
            continue;
        }
        let mut cloud = init_plrf(
            &mesh,
            &PlrfInit {
                sh_degree,
                ..PlrfInit::default()
            },
        )
        .expect("valid mesh");
        let k = sh_coeff_count(sh_degree);
        for i in 0..cloud.len() {
            cloud.attrs.means[i] = std::array::from_fn(|_| rng.random_range(-0.4..0.4));
            cloud.attrs.rotations[i] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            cloud.attrs.log_scales[i] = std::array::from_fn(|_| rng.random_range(0.3f64..1.0).ln());
            cloud.attrs.opacity_logits[i] = rng.random_range(-1.5..2.0);
            cloud.n_raw[i] = rng.random_range(-1.5..1.5);
            for j in 0..k {
                let amp = if j == 0 { 0.8 } else { 0.15 };
                cloud.attrs.sh[i * k + j] = std::array::from_fn(|_| rng.random_range(-amp..amp));
            }
        }
        return (mesh, cloud);
    }
}
