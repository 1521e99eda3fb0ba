use nalgebra::{Matrix3, Vector3};

use super::mesh::MIN_FACE_AREA;
use crate::error::{Error, Result};

/// Orientation and size of a triangle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaceFrame {
    /// Columns: first edge direction, in-plane perpendicular, normal.
    pub rotation: Matrix3<f64>,
    /// Mean of the first edge length and the triangle height over it.
    pub scale: f64,
}

pub fn compute_face_frame(v1: &Vector3<f64>, v2: &Vector3<f64>, v3: &Vector3<f64>) -> Result<FaceFrame> {
    let edge = v2 - v1;
    let base = edge.norm();
    let cross = edge.cross(&(v3 - v1));
    let twice_area = cross.norm();
    if !(0.5 * twice_area > MIN_FACE_AREA) || !(base > 0.0) {
        return Err(Error::invalid(format!("degenerate triangle (area {:e})", 0.5 * twice_area)));
    }
    let e1 = edge / base;
    let normal = cross / twice_area;
    let e2 = normal.cross(&e1);
    let height = twice_area / base;
    Ok(FaceFrame {
        rotation: Matrix3::from_columns(&[e1, e2, normal]),
        scale: 0.5 * (base + height),
    })
}

/// The three line points `(1 − n)·x̄ + n·xᵢ` and the centroid `x̄`.
pub fn sample_anchor(v1: &Vector3<f64>, v2: &Vector3<f64>, v3: &Vector3<f64>, n: f64) -> [Vector3<f64>; 4] {
    let c = (v1 + v2 + v3) / 3.0;
    let along = |v: &Vector3<f64>| c + (v - c) * n;
    [along(v1), along(v2), along(v3), c]
}
