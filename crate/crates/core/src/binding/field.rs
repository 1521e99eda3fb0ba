use nalgebra::Vector3;
use rand::Rng;
use rayon::prelude::*;

use super::frame::{compute_face_frame, sample_anchor, FaceFrame};
use super::mesh::{corners, TriangleMesh};
use crate::error::{Error, Result};
use crate::math::quat::{left_mul_backward, normalize_backward, UnitQuat};
use crate::math::sh::sh_coeff_count;
use crate::math::{inverse_sigmoid, sigmoid};
use crate::raster::{GaussianCloud, GradientBuffer};

/// Line parameter used in the scale of centroid Gaussians, which sit on no line.
pub const CENTROID_N: f64 = 0.5;

/// Which anchor of its face a Gaussian is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Slot {
    /// On the segment from the centroid toward corner 0, 1 or 2.
    Corner(u8),
    Centroid,
}

impl Slot {
    pub const ALL: [Slot; 4] = [Slot::Corner(0), Slot::Corner(1), Slot::Corner(2), Slot::Centroid];

    pub fn code(self) -> u8 {
        match self {
            Slot::Corner(i) => i,
            Slot::Centroid => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0..=2 => Some(Slot::Corner(code)),
            3 => Some(Slot::Centroid),
            _ => None,
        }
    }
}

/// Gaussians expressed in their parent face's local frame.
///
/// `attrs` holds the face-local position, raw rotation, log-scale, opacity
/// logit and SH color. Without binding (`free`), local and global coincide
/// and the face metadata is ignored.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundCloud {
    pub attrs: GaussianCloud,
    pub faces: Vec<u32>,
    pub slots: Vec<Slot>,
    /// Unconstrained line parameter; `n = sigmoid(n_raw)`.
    pub n_raw: Vec<f64>,
    /// Born from densification rather than initialization.
    pub densified: Vec<bool>,
    /// Frozen canonical (frame 0) positions fed to the deformer's encoding.
    pub canonical: Vec<[f64; 3]>,
    pub free: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlrfInit {
    pub sh_degree: usize,
    pub opacity: f64,
    /// Initial global standard deviation as a fraction of the mean edge length.
    pub scale_fraction: f64,
}

impl Default for PlrfInit {
    fn default() -> Self {
        Self {
            sh_degree: 3,
            opacity: 0.1,
            scale_fraction: 0.25,
        }
    }
}

impl BoundCloud {
    pub fn len(&self) -> usize {
        self.attrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attrs.is_empty()
    }

    pub fn n(&self, i: usize) -> f64 {
        sigmoid(self.n_raw[i])
    }

    /// `n` entering the global scale of Gaussian `i`.
    pub fn scale_n(&self, i: usize) -> f64 {
        match self.slots[i] {
            Slot::Corner(_) => self.n(i),
            Slot::Centroid => CENTROID_N,
        }
    }

    pub fn validate(&self, face_count: usize) -> Result<()> {
        self.attrs.validate()?;
        let n = self.len();
        if self.faces.len() != n
            || self.slots.len() != n
            || self.n_raw.len() != n
            || self.densified.len() != n
            || self.canonical.len() != n
        {
            return Err(Error::invalid("binding arrays have inconsistent lengths"));
        }
        if !self.free {
            if let Some(f) = self.faces.iter().find(|&&f| f as usize >= face_count) {
                return Err(Error::invalid(format!("Gaussian bound to face {f} of {face_count}")));
            }
        }
        Ok(())
    }

    /// New cloud made of the given rows, in order.
    pub fn select(&self, rows: &[usize]) -> Self {
        let k = self.attrs.coeffs_per_gaussian();
        let mut attrs = GaussianCloud::new(self.attrs.sh_degree);
        for &i in rows {
            attrs.push(
                self.attrs.means[i],
                self.attrs.rotations[i],
                self.attrs.log_scales[i],
                self.attrs.opacity_logits[i],
                &self.attrs.sh[i * k..(i + 1) * k],
            );
        }
        Self {
            attrs,
            faces: rows.iter().map(|&i| self.faces[i]).collect(),
            slots: rows.iter().map(|&i| self.slots[i]).collect(),
            n_raw: rows.iter().map(|&i| self.n_raw[i]).collect(),
            densified: rows.iter().map(|&i| self.densified[i]).collect(),
            canonical: rows.iter().map(|&i| self.canonical[i]).collect(),
            free: self.free,
        }
    }
}

/// Four Gaussians per face: three on the centroid-to-corner lines and one at
/// the centroid, all with zero local offset.
pub fn init_plrf(mesh: &TriangleMesh, init: &PlrfInit) -> Result<BoundCloud> {
    mesh.validate()?;
    let sigma = init.scale_fraction * mesh.mean_edge_length();
    let sh = vec![[0.0; 3]; sh_coeff_count(init.sh_degree)];
    let mut cloud = BoundCloud {
        attrs: GaussianCloud::new(init.sh_degree),
        faces: Vec::new(),
        slots: Vec::new(),
        n_raw: Vec::new(),
        densified: Vec::new(),
        canonical: Vec::new(),
        free: false,
    };
    for f in 0..mesh.face_count() {
        let [a, b, c] = mesh.corners(f);
        let frame = compute_face_frame(&a, &b, &c)?;
        let anchors = sample_anchor(&a, &b, &c, 0.5);
        for slot in Slot::ALL {
            let n_s = match slot {
                Slot::Corner(_) => 0.5,
                Slot::Centroid => CENTROID_N,
            };
            let log_s = (sigma / (0.5 * frame.scale * n_s)).ln();
            cloud.attrs.push([0.0; 3], [1.0, 0.0, 0.0, 0.0], [log_s; 3], inverse_sigmoid(init.opacity), &sh);
            cloud.faces.push(f as u32);
            cloud.slots.push(slot);
            cloud.n_raw.push(0.0);
            cloud.densified.push(false);
            cloud.canonical.push(anchors[slot.code() as usize].into());
        }
    }
    Ok(cloud)
}

/// Unbound Gaussians, `4·F` of them, uniformly inside the mesh bounding box.
pub fn init_free(mesh: &TriangleMesh, init: &PlrfInit, rng: &mut impl Rng) -> Result<BoundCloud> {
    mesh.validate()?;
    let count = 4 * mesh.face_count();
    let (lo, hi) = mesh.bounds();
    let log_s = (init.scale_fraction * mesh.mean_edge_length()).ln();
    let sh = vec![[0.0; 3]; sh_coeff_count(init.sh_degree)];
    let mut attrs = GaussianCloud::new(init.sh_degree);
    let mut canonical = Vec::with_capacity(count);
    for _ in 0..count {
        let p: [f64; 3] = std::array::from_fn(|a| rng.random_range(lo[a]..=hi[a]));
        attrs.push(p, [1.0, 0.0, 0.0, 0.0], [log_s; 3], inverse_sigmoid(init.opacity), &sh);
        canonical.push(p);
    }
    Ok(BoundCloud {
        attrs,
        faces: vec![0; count],
        slots: vec![Slot::Centroid; count],
        n_raw: vec![0.0; count],
        densified: vec![false; count],
        canonical,
        free: true,
    })
}

/// Per-face geometry of one posed mesh.
#[derive(Clone, Debug)]
pub struct PosedFaces {
    pub frames: Vec<FaceFrame>,
    pub quats: Vec<UnitQuat<f64>>,
    pub centroids: Vec<Vector3<f64>>,
    /// Corner minus centroid, per face and corner.
    pub spokes: Vec<[Vector3<f64>; 3]>,
}

impl PosedFaces {
    pub fn new(topology: &TriangleMesh, vertices: &[[f64; 3]]) -> Result<Self> {
        if vertices.len() != topology.vertices.len() {
            return Err(Error::invalid(format!(
                "posed mesh has {} vertices, binding expects {}",
                vertices.len(),
                topology.vertices.len()
            )));
        }
        let per_face: Vec<_> = topology
            .faces
            .iter()
            .enumerate()
            .map(|(f, &face)| {
                let [a, b, c] = corners(vertices, face);
                let frame = compute_face_frame(&a, &b, &c).map_err(|e| Error::invalid(format!("face {f}: {e}")))?;
                let centroid = (a + b + c) / 3.0;
                Ok((frame, centroid, [a - centroid, b - centroid, c - centroid]))
            })
            .collect::<Result<_>>()?;
        let mut out = Self {
            frames: Vec::with_capacity(per_face.len()),
            quats: Vec::with_capacity(per_face.len()),
            centroids: Vec::with_capacity(per_face.len()),
            spokes: Vec::with_capacity(per_face.len()),
        };
        for (frame, centroid, spokes) in per_face {
            out.quats.push(UnitQuat::from_rotation(&frame.rotation));
            out.frames.push(frame);
            out.centroids.push(centroid);
            out.spokes.push(spokes);
        }
        Ok(out)
    }

    pub fn anchor(&self, face: usize, slot: Slot, n: f64) -> Vector3<f64> {
        match slot {
            Slot::Corner(i) => self.centroids[face] + self.spokes[face][i as usize] * n,
            Slot::Centroid => self.centroids[face],
        }
    }
}

/// Global attributes: `μ = ½kRμ_local + anchor`, `r = q_R ⊗ r̂_local`,
/// `log s = ln(½k) + ln n + log s_local`.
pub fn local_to_global(cloud: &BoundCloud, posed: &PosedFaces) -> Result<GaussianCloud> {
    if cloud.free {
        return Ok(cloud.attrs.clone());
    }
    let face_count = posed.frames.len();
    cloud.validate(face_count)?;
    let rows: Vec<([f64; 3], [f64; 4], [f64; 3])> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let f = cloud.faces[i] as usize;
            let frame = &posed.frames[f];
            let half_k = 0.5 * frame.scale;
            let anchor = posed.anchor(f, cloud.slots[i], cloud.n(i));
            let mean = frame.rotation * Vector3::from(cloud.attrs.means[i]) * half_k + anchor;
            let local_q = UnitQuat::from_raw(cloud.attrs.rotations[i])?;
            let rotation = posed.quats[f].mul(local_q).to_array();
            let offset = half_k.ln() + cloud.scale_n(i).ln();
            let ls = cloud.attrs.log_scales[i];
            Ok((mean.into(), rotation, ls.map(|v| v + offset)))
        })
        .collect::<Result<_>>()?;
    let mut global = cloud.attrs.clone();
    for (i, (m, r, s)) in rows.into_iter().enumerate() {
        global.means[i] = m;
        global.rotations[i] = r;
        global.log_scales[i] = s;
    }
    Ok(global)
}

/// Gradients with respect to the face-local parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundGradients {
    pub attrs: GradientBuffer,
    pub n_raw: Vec<f64>,
}

/// Adjoint of [`local_to_global`]. Densification-born Gaussians get no
/// gradient on `n`.
pub fn local_to_global_backward(cloud: &BoundCloud, posed: &PosedFaces, grad: &GradientBuffer) -> Result<BoundGradients> {
    let n = cloud.len();
    if grad.len() != n {
        return Err(Error::InvalidState(format!("{} gradients for {} Gaussians", grad.len(), n)));
    }
    if cloud.free {
        return Ok(BoundGradients {
            attrs: grad.clone(),
            n_raw: vec![0.0; n],
        });
    }
    let mut attrs = grad.clone();
    let mut n_raw = vec![0.0; n];
    for i in 0..n {
        let f = cloud.faces[i] as usize;
        let frame = &posed.frames[f];
        let half_k = 0.5 * frame.scale;
        let gm = Vector3::from(grad.means[i]);
        attrs.means[i] = (frame.rotation.transpose() * gm * half_k).into();

        let raw = cloud.attrs.rotations[i];
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
        let unit = UnitQuat::from_raw(raw)?;
        let g_unit = left_mul_backward(posed.quats[f], grad.rotations[i]);
        attrs.rotations[i] = normalize_backward(unit.to_array(), norm, g_unit);

        if let Slot::Corner(c) = cloud.slots[i] {
            if !cloud.densified[i] {
                let nv = cloud.n(i);
                let g_log_scale: f64 = grad.log_scales[i].iter().sum();
                let dn = posed.spokes[f][c as usize].dot(&gm) + g_log_scale / nv;
                n_raw[i] = dn * nv * (1.0 - nv);
            }
        }
    }
    Ok(BoundGradients { attrs, n_raw })
}

/// Global position of every Gaussian in the given pose, ignoring any
/// deformation.
pub fn posed_positions(cloud: &BoundCloud, posed: &PosedFaces) -> Result<Vec<[f64; 3]>> {
    Ok(local_to_global(cloud, posed)?.means)
}
