use crate::binding::PosedFaces;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::ssim;
use crate::pixels::Image;

use super::Model;

/// Reported PSNR when the images are identical.
pub const PSNR_CAP: f64 = 99.0;

/// `10·log₁₀(1/MSE)` for images in [0, 1].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_shape(b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
}

/// Renders each listed frame over white and scores it against its target.
pub fn evaluate(model: &Model, dataset: &Dataset, frames: &[usize]) -> Result<Evaluation> {
    let mut out = Vec::with_capacity(frames.len());
    for &i in frames {
        if i >= dataset.len() {
            return Err(Error::invalid(format!("frame {i} out of range (dataset has {})", dataset.len())));
        }
        let posed = PosedFaces::new(&dataset.sequence.topology, &dataset.sequence.frames[i])?;
        let image = model.forward(posed, &dataset.conditions[i], &dataset.camera)?.image();
        out.push(FrameMetrics {
            frame: i,
            psnr: psnr(&image, &dataset.images[i])?,
            ssim: ssim(&image, &dataset.images[i])?.value,
        });
    }
    let n = out.len().max(1) as f64;
    Ok(Evaluation {
        mean_psnr: out.iter().map(|m| m.psnr).sum::<f64>() / n,
        mean_ssim: out.iter().map(|m| m.ssim).sum::<f64>() / n,
        frames: out,
    })
}
