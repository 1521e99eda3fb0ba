//! Mesh-bound Gaussian field.
//!
//! Every Gaussian lives in the local frame of one triangle. Posing the mesh
//! moves the frames, and with them the Gaussians.

mod density;
mod field;
mod frame;
mod mesh;

pub use density::{
    densify_and_prune, reset_opacity, DensifyConfig, DensifyOutcome, DensifyStats, RESET_OPACITY, SPLIT_SHRINK,
};
pub use field::{
    init_free, init_plrf, local_to_global, local_to_global_backward, posed_positions, BoundCloud, BoundGradients,
    PlrfInit, PosedFaces, Slot, CENTROID_N,
};
pub use frame::{compute_face_frame, sample_anchor, FaceFrame};
pub use mesh::{triangle_area, MeshSequence, TriangleMesh, MIN_FACE_AREA};

#[cfg(test)]
mod tests;
