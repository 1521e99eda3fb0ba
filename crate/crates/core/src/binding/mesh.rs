use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Smallest triangle area accepted by validation.
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh and validates it.
    pub fn new(vertices: Vec<[f64; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self { vertices, faces };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len();
        for (f, face) in self.faces.iter().enumerate() {
            if let Some(&i) = face.iter().find(|&&i| i as usize >= nv) {
                return Err(Error::invalid(format!("face {f} references vertex {i} of {nv}")));
            }
        }
        if self.vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mesh vertex".into()));
        }
        check_faces(&self.faces, &self.vertices)
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn corners(&self, face: usize) -> [Vector3<f64>; 3] {
        corners(&self.vertices, self.faces[face])
    }

    /// Same topology with new vertex positions.
    pub fn posed(&self, vertices: &[[f64; 3]]) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::invalid(format!(
                "{} vertex positions for a mesh with {} vertices",
                vertices.len(),
                self.vertices.len()
            )));
        }
        let mesh = Self {
            vertices: vertices.to_vec(),
            faces: self.faces.clone(),
        };
        check_faces(&mesh.faces, &mesh.vertices)?;
        Ok(mesh)
    }

    pub fn mean_edge_length(&self) -> f64 {
        if self.faces.is_empty() {
            return 0.0;
        }
        let total: f64 = (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.corners(f);
                (b - a).norm() + (c - b).norm() + (a - c).norm()
            })
            .sum();
        total / (3 * self.faces.len()) as f64
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for v in &self.vertices {
            for a in 0..3 {
                lo[a] = lo[a].min(v[a]);
                hi[a] = hi[a].max(v[a]);
            }
        }
        (lo, hi)
    }
}

pub(crate) fn corners(vertices: &[[f64; 3]], face: [u32; 3]) -> [Vector3<f64>; 3] {
    face.map(|i| Vector3::from(vertices[i as usize]))
}

pub fn triangle_area(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

fn check_faces(faces: &[[u32; 3]], vertices: &[[f64; 3]]) -> Result<()> {
    for (f, &face) in faces.iter().enumerate() {
        let [a, b, c] = corners(vertices, face);
        let area = triangle_area(&a, &b, &c);
        if !(area > MIN_FACE_AREA) {
            return Err(Error::DegenerateFace { face: f, area });
        }
    }
    Ok(())
}

/// Fixed topology animated by per-frame vertex positions.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshSequence {
    pub topology: TriangleMesh,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl MeshSequence {
    pub fn new(topology: TriangleMesh, frames: Vec<Vec<[f64; 3]>>) -> Result<Self> {
        for (i, f) in frames.iter().enumerate() {
            topology
                .posed(f)
                .map_err(|e| Error::invalid(format!("frame {i}: {e}")))?;
        }
        Ok(Self { topology, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, i: usize) -> Result<TriangleMesh> {
        let v = self
            .frames
            .get(i)
            .ok_or_else(|| Error::invalid(format!("frame {i} out of range (sequence has {})", self.frames.len())))?;
        self.topology.posed(v)
    }
}
