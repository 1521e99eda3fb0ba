use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::binding::{local_to_global, local_to_global_backward, BoundCloud, PosedFaces};
use crate::deform::{apply_residuals, apply_residuals_backward, Deformer, Mlp, MlpTrace};
use crate::error::{Error, Result};
use crate::loss::{total_loss, LossConfig, LossReport};
use crate::math::Camera;
use crate::pixels::Image;
use crate::raster::{rasterize_backward, render, GaussianCloud, GradientBuffer, RasterConfig, RenderOutput};

/// Everything optimized: the bound cloud and, when enabled, the residual
/// network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub cloud: BoundCloud,
    pub deformer: Option<Deformer>,
}

/// Intermediate state of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    pub posed: PosedFaces,
    pub global: GaussianCloud,
    pub residuals: Option<(Array2<f64>, MlpTrace)>,
    pub output: RenderOutput,
}

impl Forward {
    /// Color composited over white.
    pub fn image(&self) -> Image {
        let out = &self.output;
        Image {
            width: out.width as usize,
            height: out.height as usize,
            channels: 3,
            data: out.composite_over([1.0; 3]),
        }
    }

    pub fn alpha(&self) -> Image {
        let out = &self.output;
        Image {
            width: out.width as usize,
            height: out.height as usize,
            channels: 1,
            data: out.alpha.clone(),
        }
    }
}

/// Gradients of one step, keyed like the model.
#[derive(Clone, Debug)]
pub struct ModelGradients {
    pub attrs: GradientBuffer,
    pub n_raw: Vec<f64>,
    pub network: Option<Mlp>,
    /// Screen-space statistics from the rendered (deformed) cloud.
    pub render: GradientBuffer,
}

impl Model {
    pub fn forward(&self, posed: PosedFaces, condition: &[f64], cam: &Camera) -> Result<Forward> {
        let global = local_to_global(&self.cloud, &posed)?;
        let (residuals, output) = match &self.deformer {
            Some(net) => {
                let (res, trace) = net.forward(&self.cloud.canonical, condition)?;
                let (deformed, _) = apply_residuals(&global, &res)?;
                let output = render(&deformed, cam, &RasterConfig::default());
                (Some((res, trace)), output)
            }
            None => (None, render(&global, cam, &RasterConfig::default())),
        };
        Ok(Forward {
            posed,
            global,
            residuals,
            output,
        })
    }

    /// Scales seen by the regularizers: face-local scales for a bound
    /// cloud, global ones for a free cloud.
    pub fn regularized_scales(&self) -> Vec<[f64; 3]> {
        self.cloud.attrs.log_scales.iter().map(|s| s.map(f64::exp)).collect()
    }

    /// Total loss of one forward pass against its targets, and the gradient
    /// of that loss with respect to every parameter.
    pub fn loss_and_gradients(
        &self,
        fwd: &Forward,
        target: &Image,
        target_alpha: &Image,
        config: &LossConfig,
    ) -> Result<(LossReport, ModelGradients)> {
        let scales = self.regularized_scales();
        let invisible: Vec<bool> = fwd.output.radii().iter().map(|r| *r == 0).collect();
        let (report, g) = total_loss(config, &fwd.image(), target, &fwd.alpha(), target_alpha, &scales, &invisible)?;

        // The prediction is C + (1 − A)·white.
        let mut grad_alpha = g.alpha;
        for (p, ga) in grad_alpha.iter_mut().enumerate() {
            *ga -= g.color[3 * p] + g.color[3 * p + 1] + g.color[3 * p + 2];
        }
        let render_grad = rasterize_backward(&fwd.output, &g.color, &grad_alpha)?;
        let (global_grad, network) = match (&self.deformer, &fwd.residuals) {
            (Some(net), Some((res, trace))) => {
                let (gg, gres) = apply_residuals_backward(&fwd.global, res, &render_grad)?;
                (gg, Some(net.backward(trace, &gres)?))
            }
            (None, None) => (render_grad.clone(), None),
            _ => return Err(Error::InvalidState("forward pass does not match the model".into())),
        };
        let mut bound = local_to_global_backward(&self.cloud, &fwd.posed, &global_grad)?;
        for (i, gs) in g.scales.iter().enumerate() {
            for a in 0..3 {
                bound.attrs.log_scales[i][a] += gs[a] * scales[i][a];
            }
        }
        Ok((
            report,
            ModelGradients {
                attrs: bound.attrs,
                n_raw: bound.n_raw,
                network,
                render: render_grad,
            },
        ))
    }
}
