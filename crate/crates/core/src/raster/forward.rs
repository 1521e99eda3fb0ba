//! Tile-based front-to-back compositing.

use rayon::prelude::*;

use super::project::ProjectedSplat;
use super::RasterConfig;
use crate::math::Camera;

/// Saved compositing state of one tile.
#[derive(Clone, Debug, PartialEq)]
pub struct TileState {
    pub x0: u32,
    pub y0: u32,
    pub width: u32,
    pub height: u32,
    /// Gaussians overlapping the tile, in global depth order.
    pub splat_ids: Vec<u32>,
    /// CSR offsets into `contributors`, one range per tile pixel (row-major).
    pub offsets: Vec<u32>,
    /// Indices into `splat_ids` of the splats that were composited, in order.
    pub contributors: Vec<u32>,
    /// Transmittance left after the last contributor, per tile pixel.
    pub final_transmittance: Vec<f64>,
}

impl TileState {
    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn pixel_contributors(&self, local_pixel: usize) -> &[u32] {
        let lo = self.offsets[local_pixel] as usize;
        let hi = self.offsets[local_pixel + 1] as usize;
        &self.contributors[lo..hi]
    }
}

/// Global depth order of the visible splats: by camera depth, ties by index.
pub fn depth_order(splats: &[ProjectedSplat]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..splats.len() as u32).filter(|&i| splats[i as usize].is_visible()).collect();
    order.sort_by(|&a, &b| {
        splats[a as usize]
            .depth
            .total_cmp(&splats[b as usize].depth)
            .then(a.cmp(&b))
    });
    order
}

/// Alpha of a splat at a pixel center, or `None` outside its support.
#[inline]
pub fn splat_alpha(splat: &ProjectedSplat, px: f64, py: f64, cfg: &RasterConfig) -> Option<f64> {
    let maha = splat.mahalanobis_sq(px, py);
    if !(maha <= cfg.cutoff_sigma * cfg.cutoff_sigma) {
        return None;
    }
    Some((splat.opacity * (-0.5 * maha).exp()).min(cfg.alpha_clamp))
}

pub(crate) struct TileImage {
    pub state: TileState,
    pub color: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
}

pub(crate) fn bin_tiles(splats: &[ProjectedSplat], cam: &Camera, cfg: &RasterConfig) -> Vec<TileState> {
    let ts = cfg.tile_size.max(1);
    let tiles_x = cam.width.div_ceil(ts);
    let tiles_y = cam.height.div_ceil(ts);
    let mut tiles: Vec<TileState> = (0..tiles_y)
        .flat_map(|ty| (0..tiles_x).map(move |tx| (tx, ty)))
        .map(|(tx, ty)| {
            let x0 = tx * ts;
            let y0 = ty * ts;
            TileState {
                x0,
                y0,
                width: ts.min(cam.width - x0),
                height: ts.min(cam.height - y0),
                splat_ids: Vec::new(),
                offsets: Vec::new(),
                contributors: Vec::new(),
                final_transmittance: Vec::new(),
            }
        })
        .collect();
    for id in depth_order(splats) {
        let s = &splats[id as usize];
        let (Some((px0, px1)), Some((py0, py1))) = (
            ProjectedSplat::pixel_span(s.mean[0], s.radius, cam.width),
            ProjectedSplat::pixel_span(s.mean[1], s.radius, cam.height),
        ) else {
            continue;
        };
        for ty in (py0 / ts)..=(py1 / ts) {
            for tx in (px0 / ts)..=(px1 / ts) {
                tiles[(ty * tiles_x + tx) as usize].splat_ids.push(id);
            }
        }
    }
    tiles
}

pub(crate) fn composite_tile(mut state: TileState, splats: &[ProjectedSplat], cfg: &RasterConfig) -> TileImage {
    let n = state.pixel_count();
    let mut color = vec![[0.0; 3]; n];
    let mut alpha = vec![0.0; n];
    state.offsets = Vec::with_capacity(n + 1);
    state.offsets.push(0);
    state.final_transmittance = vec![1.0; n];
    for ly in 0..state.height {
        for lx in 0..state.width {
            let p = (ly * state.width + lx) as usize;
            let px = (state.x0 + lx) as f64 + 0.5;
            let py = (state.y0 + ly) as f64 + 0.5;
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for (li, &id) in state.splat_ids.iter().enumerate() {
                let s = &splats[id as usize];
                let Some(a) = splat_alpha(s, px, py, cfg) else {
                    continue;
                };
                let w = a * t;
                for ch in 0..3 {
                    c[ch] += s.color[ch] * w;
                }
                t *= 1.0 - a;
                state.contributors.push(li as u32);
                if t < cfg.min_transmittance {
                    break;
                }
            }
            state.offsets.push(state.contributors.len() as u32);
            state.final_transmittance[p] = t;
            color[p] = c;
            alpha[p] = 1.0 - t;
        }
    }
    TileImage { state, color, alpha }
}

pub(crate) fn rasterize_tiles(splats: &[ProjectedSplat], cam: &Camera, cfg: &RasterConfig) -> Vec<TileImage> {
    bin_tiles(splats, cam, cfg)
        .into_par_iter()
        .map(|t| composite_tile(t, splats, cfg))
        .collect()
}
