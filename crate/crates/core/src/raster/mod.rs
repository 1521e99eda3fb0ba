//! Differentiable Gaussian rasterizer.
//!
//! Forward: project every Gaussian, sort globally by depth, bin into
//! fixed-size tiles and composite front to back onto a black background.
//! Each pixel keeps its ordered contributor list, which the backward pass
//! replays to produce exact gradients.

mod backward;
mod cloud;
mod forward;
mod project;

use nalgebra::Vector3;

pub use cloud::GaussianCloud;
pub use forward::{depth_order, splat_alpha, TileState};
pub use project::{project_all, project_backward, project_one, GradientBuffer, ProjectedSplat};

use crate::error::{Error, Result};
use crate::math::Camera;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    pub tile_size: u32,
    /// Upper bound on a single splat's alpha.
    pub alpha_clamp: f64,
    /// A pixel stops accumulating once its transmittance drops below this.
    pub min_transmittance: f64,
    /// Support of a splat in standard deviations (Mahalanobis radius).
    pub cutoff_sigma: f64,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            alpha_clamp: 0.99,
            min_transmittance: 1e-4,
            cutoff_sigma: 3.0,
        }
    }
}

/// Gradients with respect to screen-space splat attributes.
#[derive(Clone, Debug, PartialEq)]
pub struct ScreenGradients {
    pub mean: Vec<[f64; 2]>,
    /// With respect to `(a, b, c)` of the conic.
    pub conic: Vec<[f64; 3]>,
    pub color: Vec<[f64; 3]>,
    /// With respect to post-sigmoid opacity.
    pub opacity: Vec<f64>,
}

impl ScreenGradients {
    pub fn zeros(n: usize) -> Self {
        Self {
            mean: vec![[0.0; 2]; n],
            conic: vec![[0.0; 3]; n],
            color: vec![[0.0; 3]; n],
            opacity: vec![0.0; n],
        }
    }
}

#[derive(Clone, Debug)]
struct RenderSource {
    cloud: GaussianCloud,
    camera: Camera,
}

/// Result of a forward render plus the state its backward pass needs.
#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    /// Row-major `H × W × 3`, composited over black.
    pub color: Vec<f64>,
    /// Row-major `H × W`, equal to `1 − final transmittance`.
    pub alpha: Vec<f64>,
    pub splats: Vec<ProjectedSplat>,
    pub tiles: Vec<TileState>,
    pub config: RasterConfig,
    source: Option<RenderSource>,
}

impl RenderOutput {
    pub fn radii(&self) -> Vec<u32> {
        self.splats.iter().map(|s| s.radius).collect()
    }

    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    /// Color blended over a constant background using the alpha map.
    pub fn composite_over(&self, background: [f64; 3]) -> Vec<f64> {
        let mut out = self.color.clone();
        for (p, a) in self.alpha.iter().enumerate() {
            for ch in 0..3 {
                out[3 * p + ch] += (1.0 - a) * background[ch];
            }
        }
        out
    }

    /// Ordered Gaussian indices composited at pixel `(x, y)`.
    pub fn pixel_contributors(&self, x: u32, y: u32) -> Vec<u32> {
        let ts = self.config.tile_size.max(1);
        let tiles_x = self.width.div_ceil(ts);
        let tile = &self.tiles[((y / ts) * tiles_x + x / ts) as usize];
        let lp = ((y - tile.y0) * tile.width + (x - tile.x0)) as usize;
        tile.pixel_contributors(lp)
            .iter()
            .map(|&li| tile.splat_ids[li as usize])
            .collect()
    }
}

/// Composites projected splats into an image.
pub fn rasterize_forward(splats: &[ProjectedSplat], cam: &Camera, cfg: &RasterConfig) -> RenderOutput {
    let tiles = forward::rasterize_tiles(splats, cam, cfg);
    let (w, h) = (cam.width, cam.height);
    let mut color = vec![0.0; (w * h * 3) as usize];
    let mut alpha = vec![0.0; (w * h) as usize];
    let mut states = Vec::with_capacity(tiles.len());
    for tile in tiles {
        let st = &tile.state;
        for ly in 0..st.height {
            for lx in 0..st.width {
                let lp = (ly * st.width + lx) as usize;
                let gp = ((st.y0 + ly) * w + st.x0 + lx) as usize;
                color[3 * gp..3 * gp + 3].copy_from_slice(&tile.color[lp]);
                alpha[gp] = tile.alpha[lp];
            }
        }
        states.push(tile.state);
    }
    RenderOutput {
        width: w,
        height: h,
        color,
        alpha,
        splats: splats.to_vec(),
        tiles: states,
        config: *cfg,
        source: None,
    }
}

/// Projects and rasterizes a cloud.
pub fn render(cloud: &GaussianCloud, cam: &Camera, cfg: &RasterConfig) -> RenderOutput {
    let splats = project_all(cloud, cam);
    let mut out = rasterize_forward(&splats, cam, cfg);
    out.source = Some(RenderSource {
        cloud: cloud.clone(),
        camera: cam.clone(),
    });
    out
}

/// Screen-space adjoint of [`rasterize_forward`].
pub fn rasterize_backward_screen(
    output: &RenderOutput,
    grad_color: &[f64],
    grad_alpha: &[f64],
) -> Result<ScreenGradients> {
    let n = output.pixel_count();
    if grad_color.len() != 3 * n || grad_alpha.len() != n {
        return Err(Error::InvalidState(format!(
            "upstream gradients sized {}/{} do not match a {}×{} render",
            grad_color.len(),
            grad_alpha.len(),
            output.width,
            output.height
        )));
    }
    Ok(backward::composite_backward(
        &output.tiles,
        &output.splats,
        &output.config,
        output.width,
        grad_color,
        grad_alpha,
    ))
}

/// Full adjoint of [`render`]: gradients with respect to the cloud's global
/// attributes, given dL/dcolor (`H × W × 3`) and dL/dalpha (`H × W`).
pub fn rasterize_backward(output: &RenderOutput, grad_color: &[f64], grad_alpha: &[f64]) -> Result<GradientBuffer> {
    let source = output
        .source
        .as_ref()
        .ok_or_else(|| Error::InvalidState("render output carries no source cloud for the backward pass".into()))?;
    if source.cloud.len() != output.splats.len() {
        return Err(Error::InvalidState("forward state does not match its cloud".into()));
    }
    let screen = rasterize_backward_screen(output, grad_color, grad_alpha)?;
    Ok(project_backward(&source.cloud, &source.camera, &output.splats, &screen))
}

/// Unit view direction from the camera center toward a world point.
pub fn view_direction(cam: &Camera, p: &Vector3<f64>) -> Vector3<f64> {
    (p - cam.center()).normalize()
}

#[cfg(test)]
mod tests;
