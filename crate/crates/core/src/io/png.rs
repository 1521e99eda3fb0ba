use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use crate::error::{Error, Result};
use crate::pixels::Image;

use super::write_atomic;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

fn image_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn to_levels<T: TryFrom<u32>>(data: &[f64], max: u32) -> Vec<T> {
    data.iter()
        .map(|v| {
            let level = (v.clamp(0.0, 1.0) * max as f64).round() as u32;
            T::try_from(level).ok().expect("level fits the channel type")
        })
        .collect()
}

/// Encodes a 1- or 3-channel image, clamping values to [0, 1].
pub fn encode_png(img: &Image, depth: BitDepth, path: &Path) -> Result<Vec<u8>> {
    let (w, h) = (img.width as u32, img.height as u32);
    let bad_size = || image_err(path, "pixel buffer does not match the image size");
    let dynamic = match (img.channels, depth) {
        (1, BitDepth::Eight) => {
            DynamicImage::ImageLuma8(ImageBuffer::<Luma<u8>, _>::from_raw(w, h, to_levels(&img.data, 255)).ok_or_else(bad_size)?)
        }
        (1, BitDepth::Sixteen) => DynamicImage::ImageLuma16(
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, to_levels(&img.data, 65535)).ok_or_else(bad_size)?,
        ),
        (3, BitDepth::Eight) => {
            DynamicImage::ImageRgb8(ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, to_levels(&img.data, 255)).ok_or_else(bad_size)?)
        }
        (3, BitDepth::Sixteen) => DynamicImage::ImageRgb16(
            ImageBuffer::<Rgb<u16>, _>::from_raw(w, h, to_levels(&img.data, 65535)).ok_or_else(bad_size)?,
        ),
        (c, _) => return Err(image_err(path, format!("cannot store {c}-channel images"))),
    };
    let mut bytes = Cursor::new(Vec::new());
    dynamic
        .write_to(&mut bytes, ImageFormat::Png)
        .map_err(|e| image_err(path, e.to_string()))?;
    Ok(bytes.into_inner())
}

pub fn write_png(path: &Path, img: &Image, depth: BitDepth) -> Result<()> {
    write_atomic(path, &encode_png(img, depth, path)?)
}

/// Single-channel 16-bit alpha map.
pub fn write_alpha_map(path: &Path, alpha: &Image) -> Result<()> {
    if alpha.channels != 1 {
        return Err(image_err(path, format!("alpha map has {} channels", alpha.channels)));
    }
    write_png(path, alpha, BitDepth::Sixteen)
}

/// Decodes a PNG to `[0, 1]` values. Gray images load as one channel,
/// everything else as RGB with any alpha channel dropped.
pub fn decode_png(bytes: &[u8], path: &Path) -> Result<Image> {
    let dynamic = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|e| image_err(path, e.to_string()))?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let scale8 = |v: &u8| *v as f64 / 255.0;
    let scale16 = |v: &u16| *v as f64 / 65535.0;
    let (channels, data): (usize, Vec<f64>) = match &dynamic {
        DynamicImage::ImageLuma8(b) => (1, b.as_raw().iter().map(scale8).collect()),
        DynamicImage::ImageLuma16(b) => (1, b.as_raw().iter().map(scale16).collect()),
        DynamicImage::ImageRgb8(b) => (3, b.as_raw().iter().map(scale8).collect()),
        DynamicImage::ImageRgb16(b) => (3, b.as_raw().iter().map(scale16).collect()),
        other if other.color().bytes_per_pixel() / other.color().channel_count() == 1 => {
            (3, other.to_rgb8().as_raw().iter().map(scale8).collect())
        }
        other => (3, other.to_rgb16().as_raw().iter().map(scale16).collect()),
    };
    Image::new(w, h, channels, data)
}

pub fn read_png(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    decode_png(&bytes, path)
}
