//! Reference compositor: every pixel independently gathers all splats that
//! reach it, sorts them, and blends. No tiles, no shared lists.

use crate::math::Camera;
use crate::raster::{ProjectedSplat, RasterConfig};

pub struct NaiveImage {
    pub color: Vec<f64>,
    pub alpha: Vec<f64>,
}

pub fn naive_composite(splats: &[ProjectedSplat], cam: &Camera, cfg: &RasterConfig) -> NaiveImage {
    let (w, h) = (cam.width as usize, cam.height as usize);
    let mut color = vec![0.0; w * h * 3];
    let mut alpha = vec![0.0; w * h];
    let cutoff = cfg.cutoff_sigma * cfg.cutoff_sigma;
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut hits: Vec<(f64, usize, f64)> = Vec::new();
            for (i, s) in splats.iter().enumerate() {
                if s.radius == 0 {
                    continue;
                }
                let dx = px - s.mean[0];
                let dy = py - s.mean[1];
                let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
                if q <= cutoff {
                    let a = (s.opacity * (-0.5 * q).exp()).min(cfg.alpha_clamp);
                    hits.push((s.depth, i, a));
                }
            }
            hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut t = 1.0;
            let p = y * w + x;
            for (_, i, a) in hits {
                for ch in 0..3 {
                    color[3 * p + ch] += splats[i].color[ch] * a * t;
                }
                t *= 1.0 - a;
                if t < cfg.min_transmittance {
                    break;
                }
            }
            alpha[p] = 1.0 - t;
        }
    }
    NaiveImage { color, alpha }
}
