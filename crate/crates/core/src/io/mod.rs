//! File formats: PLY/OBJ meshes, the scene archive and label exports.

mod archive;
mod export;
mod pdep;
mod ply;

pub use archive::{
    format_intrinsics, format_poses, frame_path, parse_intrinsics, parse_poses, read_scene,
    write_scene, PoseRecord, SceneReader, FRAMES_DIR, INTRINSICS_FILE, POSES_FILE,
};
pub use export::{
    format_labels, instances_json, parse_labels, write_obj, InstanceRecord, InstancesFile,
};
pub use pdep::{decode_pdep, encode_pdep, RawImage, PDEP_MAGIC};
pub use ply::{label_color, palette, read_ply, write_ply, PALETTE_SIZE};

use std::path::Path;

use crate::geometry::TriMesh;
use crate::{Error, Result};

/// Reads a PLY mesh from disk; errors carry the path.
pub fn load_ply(path: &Path) -> Result<TriMesh> {
    let bytes = std::fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    read_ply(&bytes).map_err(|e| e.in_file(path))
}

pub fn save_ply(path: &Path, mesh: &TriMesh) -> Result<()> {
    std::fs::write(path, write_ply(mesh)?).map_err(|e| Error::from(e).in_file(path))
}
