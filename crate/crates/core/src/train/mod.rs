//! Optimization loop over the bound cloud, its line parameters and the
//! residual network.

mod adam;
mod config;
mod eval;
mod model;
mod view;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamGroup, BETA1, BETA2, EPSILON};
pub use config::{Components, LearningRates, TrainConfig};
pub use eval::{evaluate, psnr, Evaluation, FrameMetrics, PSNR_CAP};
pub use model::{Forward, Model, ModelGradients};
pub use view::{canonical_center, render_condition, render_frame, render_novel_view};

use crate::binding::{
    densify_and_prune, init_free, init_plrf, reset_opacity, DensifyConfig, DensifyStats, PlrfInit, PosedFaces,
    TriangleMesh,
};
use crate::dataset::Dataset;
use crate::deform::Deformer;
use crate::error::{Error, Result};
use crate::loss::LossReport;
use adam::ensure_finite;

/// Adam state, one group per parameter family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub means: AdamGroup,
    pub rotations: AdamGroup,
    pub log_scales: AdamGroup,
    pub opacity: AdamGroup,
    pub sh: AdamGroup,
    pub n_raw: AdamGroup,
    pub network: Option<AdamGroup>,
}

impl Optimizer {
    pub fn new(model: &Model) -> Self {
        let n = model.cloud.len();
        let k = model.cloud.attrs.coeffs_per_gaussian();
        Self {
            means: AdamGroup::new(n, 3),
            rotations: AdamGroup::new(n, 4),
            log_scales: AdamGroup::new(n, 3),
            opacity: AdamGroup::new(n, 1),
            sh: AdamGroup::new(n, 3 * k),
            n_raw: AdamGroup::new(n, 1),
            network: model.deformer.as_ref().map(|d| AdamGroup::new(1, d.mlp.parameter_count())),
        }
    }

    fn cloud_groups_mut(&mut self) -> [&mut AdamGroup; 6] {
        [
            &mut self.means,
            &mut self.rotations,
            &mut self.log_scales,
            &mut self.opacity,
            &mut self.sh,
            &mut self.n_raw,
        ]
    }

    fn remap(&mut self, source: &[Option<usize>]) {
        for g in self.cloud_groups_mut() {
            g.remap(source);
        }
    }

    /// Row counts of every per-Gaussian group.
    pub fn rows(&self) -> [usize; 6] {
        [
            self.means.rows(),
            self.rotations.rows(),
            self.log_scales.rows(),
            self.opacity.rows(),
            self.sh.rows(),
            self.n_raw.rows(),
        ]
    }

    fn step(&mut self, model: &mut Model, grads: &ModelGradients, lr: &LearningRates, position_lr: f64) -> Result<()> {
        let g = &grads.attrs;
        ensure_finite("position", g.means.as_flattened())?;
        ensure_finite("rotation", g.rotations.as_flattened())?;
        ensure_finite("scale", g.log_scales.as_flattened())?;
        ensure_finite("opacity", &g.opacity_logits)?;
        ensure_finite("color", g.sh.as_flattened())?;
        ensure_finite("line", &grads.n_raw)?;
        if let Some(net) = &grads.network {
            if let Some(bad) = net.params().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("network gradient entry is {bad}")));
            }
        }

        let attrs = &mut model.cloud.attrs;
        self.means.update(attrs.means.as_flattened_mut(), g.means.as_flattened(), position_lr)?;
        self.rotations.update(attrs.rotations.as_flattened_mut(), g.rotations.as_flattened(), lr.rotation)?;
        self.log_scales.update(attrs.log_scales.as_flattened_mut(), g.log_scales.as_flattened(), lr.scale)?;
        self.opacity.update(&mut attrs.opacity_logits, &g.opacity_logits, lr.opacity)?;
        self.sh.update(attrs.sh.as_flattened_mut(), g.sh.as_flattened(), lr.sh)?;
        if !model.cloud.free {
            self.n_raw.update(&mut model.cloud.n_raw, &grads.n_raw, lr.line)?;
        }
        match (&mut model.deformer, &grads.network, &mut self.network) {
            (Some(net), Some(gnet), Some(group)) => {
                let len = net.mlp.parameter_count();
                group.update_iter(net.mlp.params_mut(), gnet.params().copied(), len, lr.network)?;
            }
            (None, None, None) => {}
            _ => return Err(Error::InvalidState("network gradients do not match the optimizer".into())),
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum EventKind {
    Densify {
        cloned: usize,
        split: usize,
        pruned: usize,
        /// Clone and split were skipped because the cloud hit its size cap.
        capped: bool,
    },
    OpacityReset {
        changed: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub iteration: u64,
    pub kind: EventKind,
    /// Gaussian count after the event.
    pub count: usize,
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            EventKind::Densify {
                cloned,
                split,
                pruned,
                capped,
            } => write!(
                f,
                "densify(+{cloned} clone, +{split} split, -{pruned} prune{})",
                if capped { ", capped" } else { "" }
            ),
            EventKind::OpacityReset { changed } => write!(f, "opacity-reset({changed})"),
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub frame: usize,
    pub loss: LossReport,
    pub count: usize,
    pub events: Vec<Event>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    pub rows: Vec<LogRow>,
}

impl TrainLog {
    pub fn events(&self) -> impl Iterator<Item = &Event> {
        self.rows.iter().flat_map(|r| r.events.iter())
    }

    pub fn densify_iterations(&self) -> Vec<u64> {
        self.events()
            .filter(|e| matches!(e.kind, EventKind::Densify { .. }))
            .map(|e| e.iteration)
            .collect()
    }

    pub fn reset_iterations(&self) -> Vec<u64> {
        self.events()
            .filter(|e| matches!(e.kind, EventKind::OpacityReset { .. }))
            .map(|e| e.iteration)
            .collect()
    }
}

/// Complete resumable training state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub config: TrainConfig,
    pub model: Model,
    pub optimizer: Optimizer,
    pub stats: DensifyStats,
    /// Completed iterations.
    pub iteration: u64,
    pub rng: ChaCha8Rng,
    /// Multiplier on the position learning rate.
    pub spatial_scale: f64,
    /// Scene size used by the split rule.
    pub scene_extent: f64,
}

/// Scene extent: a margin over the distance from the camera to the center of
/// the canonical mesh.
pub fn scene_extent(mesh: &TriangleMesh, dataset: &Dataset) -> f64 {
    let (lo, hi) = mesh.bounds();
    let center = nalgebra::Vector3::from(std::array::from_fn(|a| 0.5 * (lo[a] + hi[a])));
    1.1 * (dataset.camera.center() - center).norm()
}

impl TrainState {
    /// Fresh state: initial field on frame 0 and, if enabled, a new network.
    pub fn new(config: TrainConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        dataset.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mesh = dataset.sequence.frame(0)?;
        let init = PlrfInit {
            sh_degree: config.sh_degree,
            opacity: config.initial_opacity,
            scale_fraction: config.initial_scale,
        };
        let cloud = if config.components.binding {
            init_plrf(&mesh, &init)?
        } else {
            init_free(&mesh, &init, &mut rng)?
        };
        let deformer = config
            .components
            .deformer
            .then(|| Deformer::new(&config.deformer, dataset.condition_dim(), &mut rng));
        let model = Model { cloud, deformer };
        let extent = scene_extent(&mesh, dataset);
        Ok(Self {
            optimizer: Optimizer::new(&model),
            stats: DensifyStats::new(model.cloud.len()),
            model,
            iteration: 0,
            rng,
            spatial_scale: extent,
            scene_extent: extent,
            config,
        })
    }

    /// Checks that every per-Gaussian buffer agrees with the cloud size.
    pub fn audit(&self) -> Result<()> {
        let n = self.model.cloud.len();
        let rows = self.optimizer.rows();
        if rows.iter().any(|r| *r != n) || self.stats.grad_sum.len() != n || self.stats.visible_count.len() != n {
            return Err(Error::InvalidState(format!(
                "optimizer rows {rows:?} / statistics {} do not match {n} Gaussians",
                self.stats.grad_sum.len()
            )));
        }
        if let (Some(net), Some(g)) = (&self.model.deformer, &self.optimizer.network) {
            if g.m.len() != net.mlp.parameter_count() {
                return Err(Error::InvalidState("network moments do not match the network".into()));
            }
        }
        Ok(())
    }

    fn check_dataset(&self, dataset: &Dataset) -> Result<()> {
        dataset.validate()?;
        if let Some(net) = &self.model.deformer {
            if net.condition_dim != dataset.condition_dim() {
                return Err(Error::invalid(format!(
                    "dataset conditions have {} entries, the network expects {}",
                    dataset.condition_dim(),
                    net.condition_dim
                )));
            }
        }
        if !self.model.cloud.free {
            self.model.cloud.validate(dataset.sequence.topology.face_count())?;
        }
        Ok(())
    }

    /// One optimization step on a uniformly drawn training frame, followed by
    /// any scheduled events.
    pub fn step(&mut self, dataset: &Dataset, train_frames: &[usize], canonical: &PosedFaces) -> Result<LogRow> {
        if train_frames.is_empty() {
            return Err(Error::invalid("no training frames"));
        }
        let t = self.iteration + 1;
        let frame = train_frames[self.rng.random_range(0..train_frames.len())];
        let posed = PosedFaces::new(&dataset.sequence.topology, &dataset.sequence.frames[frame])?;
        let fwd = self.model.forward(posed, &dataset.conditions[frame], &dataset.camera)?;
        let (loss, grads) = self.model.loss_and_gradients(
            &fwd,
            &dataset.images[frame],
            &dataset.alphas[frame],
            &self.config.loss,
        )?;
        let lr = self.config.lr;
        let position_lr = lr.position_at(t, self.config.iterations) * self.spatial_scale;
        self.optimizer.step(&mut self.model, &grads, &lr, position_lr)?;
        self.stats.accumulate(&grads.render);
        self.iteration = t;

        let mut events = Vec::new();
        if self.config.densify_due(t) {
            events.push(self.densify(canonical)?);
        }
        if self.config.reset_due(t) {
            let changed = reset_opacity(&mut self.model.cloud).len();
            self.optimizer.opacity.zero_moments();
            events.push(Event {
                iteration: t,
                kind: EventKind::OpacityReset { changed },
                count: self.model.cloud.len(),
            });
        }
        Ok(LogRow {
            iteration: t,
            frame,
            loss,
            count: self.model.cloud.len(),
            events,
        })
    }

    fn densify(&mut self, canonical: &PosedFaces) -> Result<Event> {
        let capped = self.config.max_gaussians.is_some_and(|cap| self.model.cloud.len() >= cap);
        let config = if capped {
            DensifyConfig {
                grad_threshold: f64::INFINITY,
                ..self.config.densify
            }
        } else {
            self.config.densify
        };
        let (cloud, outcome) =
            densify_and_prune(&self.model.cloud, &self.stats, &config, self.scene_extent, canonical, &mut self.rng)?;
        self.model.cloud = cloud;
        self.optimizer.remap(&outcome.source);
        self.stats = DensifyStats::new(self.model.cloud.len());
        self.audit()?;
        Ok(Event {
            iteration: self.iteration,
            kind: EventKind::Densify {
                cloned: outcome.cloned,
                split: outcome.split,
                pruned: outcome.pruned,
                capped,
            },
            count: self.model.cloud.len(),
        })
    }

    /// Runs until the configured iteration count, reporting each row.
    pub fn run(&mut self, dataset: &Dataset, on_row: impl FnMut(&LogRow)) -> Result<TrainLog> {
        self.run_until(dataset, self.config.iterations, on_row)
    }

    /// Runs until `stop` iterations (capped at the configured count) have
    /// completed.
    pub fn run_until(&mut self, dataset: &Dataset, stop: u64, mut on_row: impl FnMut(&LogRow)) -> Result<TrainLog> {
        self.check_dataset(dataset)?;
        self.audit()?;
        let (train_frames, _) = dataset.split(self.config.holdout_every);
        let canonical = PosedFaces::new(&dataset.sequence.topology, &dataset.sequence.frames[0])?;
        let mut log = TrainLog::default();
        while self.iteration < stop.min(self.config.iterations) {
            let row = self.step(dataset, &train_frames, &canonical)?;
            on_row(&row);
            log.rows.push(row);
        }
        Ok(log)
    }
}

/// Initializes and trains to completion.
pub fn train(config: TrainConfig, dataset: &Dataset) -> Result<(TrainState, TrainLog)> {
    let mut state = TrainState::new(config, dataset)?;
    let log = state.run(dataset, |_| {})?;
    Ok((state, log))
}

#[cfg(test)]
mod tests;
