//! Adjoint of the tile compositor.

use rayon::prelude::*;

use super::forward::TileState;
use super::project::ProjectedSplat;
use super::{RasterConfig, ScreenGradients};

struct TileGradients {
    mean: Vec<[f64; 2]>,
    conic: Vec<[f64; 3]>,
    color: Vec<[f64; 3]>,
    opacity: Vec<f64>,
}

fn tile_backward(
    tile: &TileState,
    splats: &[ProjectedSplat],
    cfg: &RasterConfig,
    image_width: u32,
    grad_color: &[f64],
    grad_alpha: &[f64],
) -> TileGradients {
    let m = tile.splat_ids.len();
    let mut g = TileGradients {
        mean: vec![[0.0; 2]; m],
        conic: vec![[0.0; 3]; m],
        color: vec![[0.0; 3]; m],
        opacity: vec![0.0; m],
    };
    let mut alphas: Vec<f64> = Vec::new();
    let mut trans: Vec<f64> = Vec::new();
    for ly in 0..tile.height {
        for lx in 0..tile.width {
            let lp = (ly * tile.width + lx) as usize;
            let contributors = tile.pixel_contributors(lp);
            if contributors.is_empty() {
                continue;
            }
            let gx = tile.x0 + lx;
            let gy = tile.y0 + ly;
            let gp = (gy * image_width + gx) as usize;
            let gc = [grad_color[3 * gp], grad_color[3 * gp + 1], grad_color[3 * gp + 2]];
            let ga = grad_alpha[gp];
            if gc == [0.0; 3] && ga == 0.0 {
                continue;
            }
            let px = gx as f64 + 0.5;
            let py = gy as f64 + 0.5;

            alphas.clear();
            trans.clear();
            let mut t = 1.0;
            for &li in contributors {
                let s = &splats[tile.splat_ids[li as usize] as usize];
                let a = (s.opacity * (-0.5 * s.mahalanobis_sq(px, py)).exp()).min(cfg.alpha_clamp);
                alphas.push(a);
                trans.push(t);
                t *= 1.0 - a;
            }
            let t_final = tile.final_transmittance[lp];

            let mut behind = [0.0; 3];
            for k in (0..contributors.len()).rev() {
                let li = contributors[k] as usize;
                let s = &splats[tile.splat_ids[li] as usize];
                let (a, t_k) = (alphas[k], trans[k]);
                let mut d_alpha = ga * t_final / (1.0 - a);
                for ch in 0..3 {
                    d_alpha += gc[ch] * t_k * (s.color[ch] - behind[ch]);
                    g.color[li][ch] += gc[ch] * a * t_k;
                    behind[ch] = s.color[ch] * a + (1.0 - a) * behind[ch];
                }

                let dx = px - s.mean[0];
                let dy = py - s.mean[1];
                let maha = s.mahalanobis_sq(px, py);
                let gauss = (-0.5 * maha).exp();
                if s.opacity * gauss > cfg.alpha_clamp {
                    continue;
                }
                g.opacity[li] += d_alpha * gauss;
                let d_maha = -0.5 * d_alpha * s.opacity * gauss;
                let [ca, cb, cc] = s.conic;
                g.mean[li][0] -= d_maha * 2.0 * (ca * dx + cb * dy);
                g.mean[li][1] -= d_maha * 2.0 * (cb * dx + cc * dy);
                g.conic[li][0] += d_maha * dx * dx;
                g.conic[li][1] += d_maha * 2.0 * dx * dy;
                g.conic[li][2] += d_maha * dy * dy;
            }
        }
    }
    g
}

/// Gradients of the loss with respect to every splat's screen attributes.
pub(crate) fn composite_backward(
    tiles: &[TileState],
    splats: &[ProjectedSplat],
    cfg: &RasterConfig,
    image_width: u32,
    grad_color: &[f64],
    grad_alpha: &[f64],
) -> ScreenGradients {
    let per_tile: Vec<TileGradients> = tiles
        .par_iter()
        .map(|t| tile_backward(t, splats, cfg, image_width, grad_color, grad_alpha))
        .collect();
    let mut out = ScreenGradients::zeros(splats.len());
    // Fixed tile order keeps the reduction bitwise reproducible.
    for (tile, g) in tiles.iter().zip(&per_tile) {
        for (li, &id) in tile.splat_ids.iter().enumerate() {
            let id = id as usize;
            for k in 0..2 {
                out.mean[id][k] += g.mean[li][k];
            }
            for k in 0..3 {
                out.conic[id][k] += g.conic[li][k];
                out.color[id][k] += g.color[li][k];
            }
            out.opacity[id] += g.opacity[li];
        }
    }
    out
}
