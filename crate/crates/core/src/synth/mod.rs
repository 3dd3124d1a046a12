//! Synthetic planar scenes: ground-truth rooms, ray-cast keyframes with
//! view-inconsistent pixel embeddings, and scene archives.

mod render;
mod scene;

pub use render::{
    cast_ray, ground_truth_mesh, render_keyframe, render_sequence, RayHit, RenderedFrame, CLUTTER_ID,
};
pub use scene::{
    draw_anchors, make_box_room, ClutterSphere, NoiseModel, Overlay, Preset, Rect, SceneInstance,
    SyntheticScene, Wall, ANCHOR_RADIUS, ANCHOR_SEPARATION, DEFAULT_HEIGHT, DEFAULT_HFOV,
    DEFAULT_WIDTH, ROOM_EXTENT,
};

use std::path::Path;

use crate::io::{save_ply, write_scene};
use crate::Result;

/// Cell size of the ground-truth mesh written with archives (m).
pub const GT_CELL: f64 = 0.05;
pub const GT_MESH_FILE: &str = "gt_mesh.ply";

/// Renders the trajectory and writes the scene archive plus `gt_mesh.ply`.
pub fn write_scene_archive(scene: &SyntheticScene, dir: &Path) -> Result<()> {
    let frames: Vec<_> = render_sequence(scene)?.into_iter().map(|f| f.keyframe).collect();
    write_scene(dir, &frames)?;
    save_ply(&dir.join(GT_MESH_FILE), &ground_truth_mesh(scene, GT_CELL)?)
}
