use std::collections::BTreeMap;
use std::f64::consts::TAU;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::binding::{MeshSequence, TriangleMesh};
use crate::dataset::Rig;
use crate::error::{Error, Result};

pub const BLENDSHAPES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyConfig {
    /// Semi-axes of the base ellipsoid.
    pub axes: [f64; 3],
    /// Relative radial noise on the base shape.
    pub roughness: f64,
    /// Peak displacement of one blendshape at weight 1.
    pub shape_amplitude: f64,
    /// Angular width of a blendshape bump, as a chord length on the unit sphere.
    pub shape_width: f64,
    /// Peak rotation angles about x, y, z.
    pub rotation_amplitude: [f64; 3],
    /// Range of oscillation periods, in frames.
    pub period_range: (f64, f64),
}

impl Default for ProxyConfig {
    fn default() -> Self {
        Self {
            axes: [0.85, 1.0, 0.9],
            roughness: 0.06,
            shape_amplitude: 0.14,
            shape_width: 0.7,
            rotation_amplitude: [0.2, 0.35, 0.1],
            period_range: (14.0, 40.0),
        }
    }
}

/// An animated head proxy: sequence, per-frame condition vectors and the rig
/// that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct ProxySequence {
    pub sequence: MeshSequence,
    pub conditions: Vec<Vec<f64>>,
    pub rig: Rig,
}

const PHI: f64 = 1.618_033_988_749_895;

fn icosahedron() -> (Vec<Vector3<f64>>, Vec<[u32; 3]>) {
    let v = [
        [-1.0, PHI, 0.0],
        [1.0, PHI, 0.0],
        [-1.0, -PHI, 0.0],
        [1.0, -PHI, 0.0],
        [0.0, -1.0, PHI],
        [0.0, 1.0, PHI],
        [0.0, -1.0, -PHI],
        [0.0, 1.0, -PHI],
        [PHI, 0.0, -1.0],
        [PHI, 0.0, 1.0],
        [-PHI, 0.0, -1.0],
        [-PHI, 0.0, 1.0],
    ];
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (v.iter().map(|p| Vector3::from(*p).normalize()).collect(), faces)
}

/// Splits the longest edge of a closed mesh, inserting its midpoint pushed
/// onto the unit sphere. Orientation is preserved.
fn split_longest_edge(verts: &mut Vec<Vector3<f64>>, faces: &mut Vec<[u32; 3]>) {
    // Directed edge → (face, corner of the edge's start).
    let mut directed = BTreeMap::new();
    for (f, face) in faces.iter().enumerate() {
        for c in 0..3 {
            directed.insert((face[c], face[(c + 1) % 3]), (f, c));
        }
    }
    let (a, b) = directed
        .keys()
        .filter(|(a, b)| a < b)
        .copied()
        .max_by(|x, y| {
            let lx = (verts[x.0 as usize] - verts[x.1 as usize]).norm();
            let ly = (verts[y.0 as usize] - verts[y.1 as usize]).norm();
            lx.total_cmp(&ly).then(y.cmp(x))
        })
        .expect("mesh has edges");
    let m = verts.len() as u32;
    verts.push(((verts[a as usize] + verts[b as usize]) / 2.0).normalize());
    let rewrite = |faces: &mut Vec<[u32; 3]>, (f, c): (usize, usize)| {
        let face = faces[f];
        let (s, e, o) = (face[c], face[(c + 1) % 3], face[(c + 2) % 3]);
        faces[f] = [s, m, o];
        faces.push([m, e, o]);
    };
    let first = directed[&(a, b)];
    let second = directed[&(b, a)];
    rewrite(faces, first);
    rewrite(faces, second);
}

/// Positions are kept at single precision so that they survive the f32
/// vertex blocks of a saved dataset unchanged.
fn to_f32(v: f64) -> f64 {
    v as f32 as f64
}

/// Base mesh with at least `vertices` vertices (12 + one per edge split).
pub fn proxy_mesh(vertices: usize, config: &ProxyConfig, rng: &mut impl Rng) -> Result<TriangleMesh> {
    if vertices < 12 {
        return Err(Error::invalid(format!("proxy mesh needs at least 12 vertices, asked for {vertices}")));
    }
    let (mut verts, mut faces) = icosahedron();
    while verts.len() < vertices {
        split_longest_edge(&mut verts, &mut faces);
    }
    let positions = verts
        .iter()
        .map(|p| {
            let r = 1.0 + config.roughness * rng.random_range(-1.0..1.0);
            std::array::from_fn(|a| to_f32(p[a] * config.axes[a] * r))
        })
        .collect();
    TriangleMesh::new(positions, faces)
}

/// Smooth radial bumps, one per blendshape.
fn bump_shapes(base: &TriangleMesh, config: &ProxyConfig, rng: &mut impl Rng) -> Vec<Vec<[f64; 3]>> {
    (0..BLENDSHAPES)
        .map(|_| {
            let center = loop {
                let c: Vector3<f64> = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0));
                let n = c.norm();
                if n > 0.1 && n <= 1.0 {
                    break c / n;
                }
            };
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            base.vertices
                .iter()
                .map(|v| {
                    let dir = Vector3::from(*v).normalize();
                    let d2 = (dir - center).norm_squared();
                    let w = sign * config.shape_amplitude * (-d2 / (2.0 * config.shape_width.powi(2))).exp();
                    (dir * w).into()
                })
                .collect()
        })
        .collect()
}

pub fn make_proxy_sequence(seed: u64, frames: usize, vertices: usize) -> Result<ProxySequence> {
    make_proxy_sequence_with(seed, frames, vertices, &ProxyConfig::default())
}

/// Animated proxy whose blend weights are `sin(ωₖ·i)` and rotation angles
/// `Bₐ·sin(ω′ₐ·i)`, so frame 0 is the undeformed base.
pub fn make_proxy_sequence_with(seed: u64, frames: usize, vertices: usize, config: &ProxyConfig) -> Result<ProxySequence> {
    if frames < 2 {
        return Err(Error::invalid(format!("need at least 2 frames, asked for {frames}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base = proxy_mesh(vertices, config, &mut rng)?;
    let rig = Rig {
        shapes: bump_shapes(&base, config, &mut rng),
        base: base.vertices.clone(),
        pivot: [0.0; 3],
    };
    let (lo, hi) = config.period_range;
    let omega: Vec<f64> = (0..BLENDSHAPES + 3).map(|_| TAU / rng.random_range(lo..hi)).collect();
    let conditions: Vec<Vec<f64>> = (0..frames)
        .map(|i| {
            let t = i as f64;
            (0..BLENDSHAPES + 3)
                .map(|k| {
                    let amp = if k < BLENDSHAPES { 1.0 } else { config.rotation_amplitude[k - BLENDSHAPES] };
                    amp * (omega[k] * t).sin()
                })
                .collect()
        })
        .collect();
    let posed = conditions
        .iter()
        .map(|c| Ok(rig.pose(c)?.into_iter().map(|p| p.map(to_f32)).collect()))
        .collect::<Result<Vec<_>>>()?;
    let sequence = MeshSequence::new(base, posed)?;
    Ok(ProxySequence {
        sequence,
        conditions,
        rig,
    })
}
