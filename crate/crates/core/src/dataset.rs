//! In-memory training data: an animated mesh, per-frame conditions, target
//! images and alpha maps seen from one camera.

use nalgebra::{Rotation3, Vector3};

use crate::binding::MeshSequence;
use crate::error::{Error, Result};
use crate::math::Camera;
use crate::pixels::Image;

/// Linear blendshape rig with a global rotation.
///
/// A condition vector is `[blend weights (K) | rotation angles x, y, z]`;
/// vertices are `Rz·Ry·Rx·(base + Σ wₖ·shapeₖ − pivot) + pivot`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rig {
    pub base: Vec<[f64; 3]>,
    pub shapes: Vec<Vec<[f64; 3]>>,
    pub pivot: [f64; 3],
}

impl Rig {
    pub fn condition_dim(&self) -> usize {
        self.shapes.len() + 3
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.shapes.iter().position(|s| s.len() != self.base.len()) {
            return Err(Error::invalid(format!(
                "blendshape {k} has {} offsets for {} vertices",
                self.shapes[k].len(),
                self.base.len()
            )));
        }
        Ok(())
    }

    pub fn pose(&self, condition: &[f64]) -> Result<Vec<[f64; 3]>> {
        if condition.len() != self.condition_dim() {
            return Err(Error::invalid(format!(
                "condition has {} entries, rig expects {}",
                condition.len(),
                self.condition_dim()
            )));
        }
        let k = self.shapes.len();
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), condition[k + 2])
            * Rotation3::from_axis_angle(&Vector3::y_axis(), condition[k + 1])
            * Rotation3::from_axis_angle(&Vector3::x_axis(), condition[k]);
        let pivot = Vector3::from(self.pivot);
        Ok((0..self.base.len())
            .map(|v| {
                let mut p = Vector3::from(self.base[v]);
                for (shape, w) in self.shapes.iter().zip(condition) {
                    p += Vector3::from(shape[v]) * *w;
                }
                (rot * (p - pivot) + pivot).into()
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub sequence: MeshSequence,
    pub conditions: Vec<Vec<f64>>,
    /// Targets composited over white.
    pub images: Vec<Image>,
    /// Single-channel alpha maps.
    pub alphas: Vec<Image>,
    pub camera: Camera,
    pub rig: Option<Rig>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    pub fn condition_dim(&self) -> usize {
        self.conditions.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        for (name, len) in [
            ("conditions", self.conditions.len()),
            ("images", self.images.len()),
            ("alphas", self.alphas.len()),
        ] {
            if len != n {
                return Err(Error::invalid(format!("{name} has {len} entries for {n} frames")));
            }
        }
        if n == 0 {
            return Err(Error::invalid("dataset has no frames"));
        }
        self.camera.validate()?;
        let dim = self.condition_dim();
        let (w, h) = (self.camera.width as usize, self.camera.height as usize);
        for i in 0..n {
            if self.conditions[i].len() != dim {
                return Err(Error::invalid(format!("frame {i}: condition length differs from frame 0")));
            }
            let img = &self.images[i];
            if (img.width, img.height, img.channels) != (w, h, 3) {
                return Err(Error::invalid(format!("frame {i}: image is not {w}×{h} RGB")));
            }
            let a = &self.alphas[i];
            if (a.width, a.height, a.channels) != (w, h, 1) {
                return Err(Error::invalid(format!("frame {i}: alpha map is not {w}×{h}")));
            }
        }
        if let Some(rig) = &self.rig {
            rig.validate()?;
            if rig.condition_dim() != dim || rig.base.len() != self.sequence.topology.vertices.len() {
                return Err(Error::invalid("rig does not match the sequence"));
            }
        }
        Ok(())
    }

    /// Every `holdout_every`-th frame (offset `holdout_every − 1`) is held out.
    pub fn split(&self, holdout_every: usize) -> (Vec<usize>, Vec<usize>) {
        if holdout_every < 2 {
            return ((0..self.len()).collect(), Vec::new());
        }
        (0..self.len()).partition(|i| i % holdout_every != holdout_every - 1)
    }
}
