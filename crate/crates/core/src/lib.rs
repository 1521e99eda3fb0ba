//! Animatable head avatars built from 3D Gaussians bound to a deforming
//! triangle mesh: differentiable rendering, fitting to video frames, and the
//! file formats and tools around them.

pub mod error;
pub mod io;
pub mod binding;
pub mod dataset;
pub mod deform;
pub mod loss;
pub mod math;
pub mod pixels;
pub mod raster;
pub mod synth;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
