use nalgebra::Vector3;

use crate::binding::PosedFaces;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

use super::{Forward, Model};

fn check_frame(dataset: &Dataset, frame: usize) -> Result<()> {
    if frame >= dataset.len() {
        return Err(Error::invalid(format!("frame {frame} out of range (dataset has {} frames)", dataset.len())));
    }
    Ok(())
}

/// Renders a recorded frame from the dataset camera.
pub fn render_frame(model: &Model, dataset: &Dataset, frame: usize) -> Result<Forward> {
    check_frame(dataset, frame)?;
    let posed = PosedFaces::new(&dataset.sequence.topology, &dataset.sequence.frames[frame])?;
    model.forward(posed, &dataset.conditions[frame], &dataset.camera)
}

/// Poses the mesh with the dataset rig and renders an arbitrary condition.
pub fn render_condition(model: &Model, dataset: &Dataset, condition: &[f64]) -> Result<Forward> {
    let rig = dataset
        .rig
        .as_ref()
        .ok_or_else(|| Error::invalid("dataset has no rig; conditions cannot be posed"))?;
    let posed = PosedFaces::new(&dataset.sequence.topology, &rig.pose(condition)?)?;
    model.forward(posed, condition, &dataset.camera)
}

/// Centre of the frame-0 mesh bounding box.
pub fn canonical_center(dataset: &Dataset) -> Vector3<f64> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &dataset.sequence.frames[0] {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    Vector3::from_fn(|a, _| 0.5 * (lo[a] + hi[a]))
}

/// Renders a recorded frame with the camera orbited about the head.
pub fn render_novel_view(model: &Model, dataset: &Dataset, frame: usize, azimuth: f64, elevation: f64) -> Result<Forward> {
    check_frame(dataset, frame)?;
    if !azimuth.is_finite() || !elevation.is_finite() {
        return Err(Error::invalid("orbit angles must be finite"));
    }
    let cam = dataset.camera.orbit(&canonical_center(dataset), azimuth, elevation);
    let posed = PosedFaces::new(&dataset.sequence.topology, &dataset.sequence.frames[frame])?;
    model.forward(posed, &dataset.conditions[frame], &cam)
}
