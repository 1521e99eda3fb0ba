use nalgebra::{Matrix3, Vector3};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::proxy::ProxySequence;
use crate::binding::{init_plrf, local_to_global, BoundCloud, PlrfInit, PosedFaces};
use crate::dataset::Dataset;
use crate::deform::{apply_residuals, RESIDUAL_WIDTH};
use crate::error::Result;
use crate::math::sh::{sh_coeff_count, SH_C0};
use crate::math::{inverse_sigmoid, Camera};
use crate::pixels::Image;
use crate::raster::{render, RasterConfig, RenderOutput};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TeacherConfig {
    pub sh_degree: usize,
    /// Typical size of the condition-driven offsets the rig cannot express.
    pub offset_amplitude: f64,
    pub opacity_range: (f64, f64),
    /// Global in-plane standard deviation range, as a fraction of the mean edge.
    pub scale_range: (f64, f64),
    /// Thickness along the face normal relative to the in-plane size.
    pub flatness: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            sh_degree: 1,
            offset_amplitude: 0.08,
            opacity_range: (0.8, 0.98),
            scale_range: (0.25, 0.4),
            flatness: 0.3,
        }
    }
}

/// The hidden cloud and its condition-driven motion field.
#[derive(Clone, Debug, PartialEq)]
pub struct Teacher {
    pub cloud: BoundCloud,
    /// Offset `Σₖ ρₖ·(Mₖ·x₀ + bₖ)` over the blend weights ρₖ, applied on top
    /// of the rig.
    pub fields: Vec<(Matrix3<f64>, Vector3<f64>)>,
}

impl Teacher {
    pub fn residuals(&self, condition: &[f64]) -> Array2<f64> {
        let mut res = Array2::zeros((self.cloud.len(), RESIDUAL_WIDTH));
        for (i, x0) in self.cloud.canonical.iter().enumerate() {
            let x0 = Vector3::from(*x0);
            let mut d = Vector3::zeros();
            for ((m, b), w) in self.fields.iter().zip(condition) {
                d += (m * x0 + b) * *w;
            }
            for a in 0..3 {
                res[(i, a)] = d[a];
            }
        }
        res
    }

    pub fn render_frame(&self, posed: &PosedFaces, condition: &[f64], cam: &Camera) -> Result<RenderOutput> {
        let global = local_to_global(&self.cloud, posed)?;
        let (deformed, _) = apply_residuals(&global, &self.residuals(condition))?;
        Ok(render(&deformed, cam, &RasterConfig::default()))
    }
}

pub fn make_teacher(proxy: &ProxySequence, config: &TeacherConfig, rng: &mut impl Rng) -> Result<Teacher> {
    let mesh = &proxy.sequence.topology;
    let mut cloud = init_plrf(
        mesh,
        &PlrfInit {
            sh_degree: config.sh_degree,
            opacity: 0.5,
            scale_fraction: 1.0,
        },
    )?;
    let posed = PosedFaces::new(mesh, &mesh.vertices)?;
    let edge = mesh.mean_edge_length();
    let k = sh_coeff_count(config.sh_degree);
    for i in 0..cloud.len() {
        cloud.n_raw[i] = rng.random_range(-1.2..1.2);
        cloud.attrs.means[i] = std::array::from_fn(|a| if a < 2 { rng.random_range(-0.3..0.3) } else { 0.0 });
        let tilt: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.15..0.15));
        cloud.attrs.rotations[i] = [1.0, tilt[0], tilt[1], tilt[2]];
        let f = cloud.faces[i] as usize;
        let to_local = -(0.5 * posed.frames[f].scale * cloud.scale_n(i)).ln();
        let sx = rng.random_range(config.scale_range.0..config.scale_range.1) * edge;
        let sy = rng.random_range(config.scale_range.0..config.scale_range.1) * edge;
        cloud.attrs.log_scales[i] = [sx.ln() + to_local, sy.ln() + to_local, (config.flatness * sx.min(sy)).ln() + to_local];
        cloud.attrs.opacity_logits[i] = inverse_sigmoid(rng.random_range(config.opacity_range.0..config.opacity_range.1));
        for j in 0..k {
            cloud.attrs.sh[i * k + j] = if j == 0 {
                std::array::from_fn(|_| (rng.random_range(0.1..0.9) - 0.5) / SH_C0)
            } else {
                std::array::from_fn(|_| rng.random_range(-0.15..0.15))
            };
        }
    }
    cloud.canonical = local_to_global(&cloud, &posed)?.means;
    let expressions = proxy.rig.shapes.len();
    let amp = config.offset_amplitude / (expressions as f64).sqrt();
    let fields = (0..expressions)
        .map(|_| {
            (
                Matrix3::from_fn(|_, _| rng.random_range(-amp..amp)),
                Vector3::from_fn(|_, _| rng.random_range(-amp..amp)),
            )
        })
        .collect();
    Ok(Teacher { cloud, fields })
}

/// Rounds to the nearest 16-bit level so that images survive PNG storage.
pub fn quantize16(v: f64) -> f64 {
    (v.clamp(0.0, 1.0) * 65535.0).round() / 65535.0
}

/// Renders every frame of the proxy through a freshly drawn teacher.
pub fn make_teacher_dataset(proxy: &ProxySequence, cam: &Camera, seed: u64) -> Result<(Dataset, Teacher)> {
    make_teacher_dataset_with(proxy, cam, seed, &TeacherConfig::default())
}

pub fn make_teacher_dataset_with(
    proxy: &ProxySequence,
    cam: &Camera,
    seed: u64,
    config: &TeacherConfig,
) -> Result<(Dataset, Teacher)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let teacher = make_teacher(proxy, config, &mut rng)?;
    let topology = &proxy.sequence.topology;
    let (w, h) = (cam.width as usize, cam.height as usize);
    let frames: Vec<(Image, Image)> = (0..proxy.sequence.len())
        .into_par_iter()
        .map(|i| {
            let posed = PosedFaces::new(topology, &proxy.sequence.frames[i])?;
            let out = teacher.render_frame(&posed, &proxy.conditions[i], cam)?;
            let color = out.composite_over([1.0; 3]).into_iter().map(quantize16).collect();
            let alpha = out.alpha.iter().map(|a| quantize16(*a)).collect();
            Ok((Image::new(w, h, 3, color)?, Image::new(w, h, 1, alpha)?))
        })
        .collect::<Result<_>>()?;
    let (images, alphas) = frames.into_iter().unzip();
    let dataset = Dataset {
        sequence: proxy.sequence.clone(),
        conditions: proxy.conditions.clone(),
        images,
        alphas,
        camera: cam.clone(),
        rig: Some(proxy.rig.clone()),
    };
    dataset.validate()?;
    Ok((dataset, teacher))
}
