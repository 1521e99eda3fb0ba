use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;

use super::field::{local_to_global, BoundCloud, PosedFaces};
use crate::error::Result;
use crate::math::quat::UnitQuat;
use crate::math::{inverse_sigmoid, sigmoid};
use crate::raster::GradientBuffer;

/// Post-sigmoid opacity ceiling applied by [`reset_opacity`].
pub const RESET_OPACITY: f64 = 0.01;
/// Split children shrink by this factor.
pub const SPLIT_SHRINK: f64 = 1.6;

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensifyConfig {
    /// Mean view-space positional gradient that triggers densification.
    pub grad_threshold: f64,
    /// Gaussians below this post-sigmoid opacity are removed.
    pub min_opacity: f64,
    /// Split when the largest global scale exceeds this fraction of the
    /// scene extent, clone otherwise.
    pub percent_dense: f64,
}

impl Default for DensifyConfig {
    fn default() -> Self {
        Self {
            grad_threshold: 2e-4,
            min_opacity: 0.005,
            percent_dense: 0.01,
        }
    }
}

/// Running view-space gradient statistics since the last densification.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DensifyStats {
    pub grad_sum: Vec<f64>,
    pub visible_count: Vec<u32>,
}

impl DensifyStats {
    pub fn new(n: usize) -> Self {
        Self {
            grad_sum: vec![0.0; n],
            visible_count: vec![0; n],
        }
    }

    pub fn accumulate(&mut self, grads: &GradientBuffer) {
        for i in 0..self.grad_sum.len().min(grads.len()) {
            if grads.visible[i] {
                self.grad_sum[i] += grads.viewspace_grad[i];
                self.visible_count[i] += 1;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        match self.visible_count[i] {
            0 => 0.0,
            c => self.grad_sum[i] / c as f64,
        }
    }
}

/// Row mapping produced by a densification pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyOutcome {
    /// For every row of the new cloud, the old row whose optimizer state it
    /// keeps; `None` for newborn Gaussians, which start from zero moments.
    pub source: Vec<Option<usize>>,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
}

/// Clones small and splits large high-gradient Gaussians, then prunes
/// near-transparent ones.
///
/// `canonical` is the frame-0 pose; split and clone decisions use global
/// scales there, and newborn Gaussians take their canonical position from it.
pub fn densify_and_prune(
    cloud: &BoundCloud,
    stats: &DensifyStats,
    config: &DensifyConfig,
    scene_extent: f64,
    canonical: &PosedFaces,
    rng: &mut impl Rng,
) -> Result<(BoundCloud, DensifyOutcome)> {
    let n = cloud.len();
    let global = local_to_global(cloud, canonical)?;
    let split_scale = config.percent_dense * scene_extent;

    let mut split = Vec::new();
    let mut clone = Vec::new();
    for i in 0..n {
        if stats.mean(i) < config.grad_threshold {
            continue;
        }
        let max_scale = global.log_scales[i].iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp();
        if max_scale > split_scale {
            split.push(i);
        } else {
            clone.push(i);
        }
    }

    let mut rows: Vec<usize> = Vec::with_capacity(n + clone.len() + split.len());
    let mut source: Vec<Option<usize>> = Vec::with_capacity(rows.capacity());
    let mut is_split = vec![false; n];
    for &i in &split {
        is_split[i] = true;
    }
    for i in (0..n).filter(|&i| !is_split[i]) {
        rows.push(i);
        source.push(Some(i));
    }
    rows.extend(&clone);
    source.extend(clone.iter().map(|_| None));
    for &i in &split {
        rows.extend([i, i]);
        source.extend([None, None]);
    }
    let mut next = cloud.select(&rows);
    let born = n - split.len();
    for j in born..next.len() {
        next.densified[j] = true;
    }

    // Split children: positions drawn from the parent footprint, expressed in
    // face-local units, and shrunken scales.
    let first_child = born + clone.len();
    for j in first_child..next.len() {
        let parent = rows[j];
        let scale = Vector3::from(cloud.attrs.log_scales[parent].map(f64::exp));
        let local_per_global = if cloud.free { 1.0 } else { cloud.scale_n(parent) };
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let rot = UnitQuat::from_raw(cloud.attrs.rotations[parent])?.to_rotation();
        let offset = rot * scale.component_mul(&z) * local_per_global;
        let m = Vector3::from(cloud.attrs.means[parent]) + offset;
        next.attrs.means[j] = m.into();
        next.attrs.log_scales[j] = cloud.attrs.log_scales[parent].map(|v| v - SPLIT_SHRINK.ln());
    }
    if first_child < next.len() {
        let positions = local_to_global(&next, canonical)?.means;
        for j in first_child..next.len() {
            next.canonical[j] = positions[j];
        }
    }

    let keep: Vec<usize> = (0..next.len())
        .filter(|&j| sigmoid(next.attrs.opacity_logits[j]) >= config.min_opacity)
        .collect();
    let pruned = next.len() - keep.len();
    if pruned > 0 {
        next = next.select(&keep);
        source = keep.iter().map(|&j| source[j]).collect();
    }
    Ok((
        next,
        DensifyOutcome {
            source,
            cloned: clone.len(),
            split: split.len(),
            pruned,
        },
    ))
}

/// Caps every opacity at [`RESET_OPACITY`]. Returns the indices whose
/// opacity changed.
pub fn reset_opacity(cloud: &mut BoundCloud) -> Vec<usize> {
    let cap = inverse_sigmoid(RESET_OPACITY);
    let mut changed = Vec::new();
    for (i, o) in cloud.attrs.opacity_logits.iter_mut().enumerate() {
        if *o > cap {
            *o = cap;
            changed.push(i);
        }
    }
    changed
}
