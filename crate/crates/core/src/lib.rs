//! Plane instance segmentation of reconstructed indoor scenes.
//!
//! The pipeline fuses posed depth keyframes (with per-pixel planar
//! probabilities) into a TSDF, extracts a mesh restricted to planar regions,
//! distills view-inconsistent per-pixel plane embeddings into a per-scene
//! embedding field, and groups mesh vertices into plane instances.
//!
//! Module map:
//!
//! * [`geometry`]: mesh, plane, camera and point-cloud types plus depth
//!   normals, connectivity and surface sampling.
//! * [`tsdf`]: volumetric fusion with a planar-probability channel and
//!   marching-cubes extraction.
//! * [`embedding`]: the per-scene periodic MLP, the push-pull distillation
//!   loss and its hand-written backward pass, and online training.
//! * [`grouping`]: sequential RANSAC, mean-shift, plane merging, label
//!   propagation and Hungarian plane tracking.
//! * [`planarize`]: plane fitting and mesh planarization.
//! * [`metrics`]: geometric, segmentation and planar evaluation.
//! * [`synth`]: synthetic rooms, keyframe rendering and scene archives.
//! * [`io`]: PLY/OBJ meshes, the scene archive format and label exports.
//! * [`pipeline`]: end-to-end batch and online reconstruction.

pub mod config;
pub mod embedding;
pub mod error;
pub mod geometry;
pub mod grouping;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod planarize;
pub mod synth;
pub mod tsdf;

pub use error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Derives an independent stream seed from a base seed and a stream index
/// (splitmix64 finalizer).
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
