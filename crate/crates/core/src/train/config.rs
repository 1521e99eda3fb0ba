use serde::{Deserialize, Serialize};

use crate::binding::DensifyConfig;
use crate::deform::DeformerConfig;
use crate::error::{Error, Result};
use crate::loss::LossConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub sh: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub line: f64,
    pub network: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            sh: 2.5e-3,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
            line: 1e-3,
            network: 1e-4,
        }
    }
}

impl LearningRates {
    /// Log-linear decay of the position rate over `total` iterations.
    pub fn position_at(&self, iteration: u64, total: u64) -> f64 {
        let t = if total == 0 { 1.0 } else { (iteration as f64 / total as f64).clamp(0.0, 1.0) };
        ((1.0 - t) * self.position.ln() + t * self.position_final.ln()).exp()
    }
}

/// Components switched off for ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Components {
    /// Bind Gaussians to mesh faces; otherwise they float freely.
    pub binding: bool,
    /// Apply the condition-driven residual network.
    pub deformer: bool,
}

impl Default for Components {
    fn default() -> Self {
        Self {
            binding: true,
            deformer: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: u64,
    pub densify_period: u64,
    pub densify_until: u64,
    pub opacity_reset_period: u64,
    /// Last iteration at which an opacity reset may fire.
    pub opacity_reset_until: Option<u64>,
    /// Densification is skipped while the cloud holds this many Gaussians.
    pub max_gaussians: Option<usize>,
    pub sh_degree: usize,
    pub initial_opacity: f64,
    /// Initial global Gaussian size as a fraction of the mean edge length.
    pub initial_scale: f64,
    /// Every n-th frame is held out from training.
    pub holdout_every: usize,
    pub seed: u64,
    pub lr: LearningRates,
    pub loss: LossConfig,
    pub densify: DensifyConfig,
    pub deformer: DeformerConfig,
    pub components: Components,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            iterations: 120_000,
            densify_period: 400,
            densify_until: 60_000,
            opacity_reset_period: 3000,
            opacity_reset_until: None,
            max_gaussians: None,
            sh_degree: 3,
            initial_opacity: 0.1,
            initial_scale: 0.25,
            holdout_every: 4,
            seed: 0,
            lr: LearningRates::default(),
            loss: LossConfig::default(),
            densify: DensifyConfig::default(),
            deformer: DeformerConfig::default(),
            components: Components::default(),
        }
    }
}

impl TrainConfig {
    /// Short schedule for the synthetic desk-scale data, keeping the ratios
    /// between periods of the full schedule.
    pub fn desk() -> Self {
        Self {
            iterations: 3000,
            densify_period: 100,
            densify_until: 1500,
            opacity_reset_period: 500,
            opacity_reset_until: Some(2000),
            max_gaussians: Some(1500),
            sh_degree: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.densify_until > self.iterations {
            return Err(Error::invalid(format!(
                "densify_until ({}) exceeds the iteration count ({})",
                self.densify_until, self.iterations
            )));
        }
        if self.densify_period == 0 || self.opacity_reset_period == 0 {
            return Err(Error::invalid("schedule periods must be at least 1"));
        }
        let lr = &self.lr;
        let rates = [
            lr.position,
            lr.position_final,
            lr.sh,
            lr.opacity,
            lr.scale,
            lr.rotation,
            lr.line,
            lr.network,
        ];
        if rates.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        if self.sh_degree > crate::math::sh::MAX_SH_DEGREE {
            return Err(Error::invalid(format!("SH degree {} unsupported", self.sh_degree)));
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) || !(self.initial_scale > 0.0) {
            return Err(Error::invalid("initial opacity must lie in (0, 1) and initial scale be positive"));
        }
        Ok(())
    }

    pub fn densify_due(&self, iteration: u64) -> bool {
        iteration > 0 && iteration % self.densify_period == 0 && iteration <= self.densify_until
    }

    pub fn reset_due(&self, iteration: u64) -> bool {
        iteration > 0
            && iteration % self.opacity_reset_period == 0
            && self.opacity_reset_until.is_none_or(|u| iteration <= u)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config serialization: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}
