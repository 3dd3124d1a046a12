//! Volumetric fusion of depth keyframes with a planar-probability channel.

mod marching_cubes;
mod tables;
mod volume;

pub use volume::{TsdfVolume, DEFAULT_PLANAR_THRESHOLD, DEFAULT_VOXEL_SIZE};

use crate::geometry::{CameraPose, DepthImage, Image};
use crate::{Error, Result};

/// One posed depth image with its per-pixel planar probability and per-pixel
/// (single-image) plane embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub depth: DepthImage,
    pub planar_prob: Image<f32>,
    pub pixel_embedding: Image<[f32; 3]>,
    pub pose: CameraPose,
    pub frame_id: u32,
    pub timestamp: f64,
}

impl Keyframe {
    pub fn width(&self) -> usize {
        self.depth.width
    }

    pub fn height(&self) -> usize {
        self.depth.height
    }

    pub fn validate(&self) -> Result<()> {
        let shape = self.depth.shape();
        if self.planar_prob.shape() != shape || self.pixel_embedding.shape() != shape {
            return Err(Error::invalid(format!(
                "frame {}: depth, probability and embedding images differ in size",
                self.frame_id
            )));
        }
        if self
            .planar_prob
            .data
            .iter()
            .any(|p| !(0.0..=1.0).contains(p))
        {
            return Err(Error::invalid(format!(
                "frame {}: planar probabilities must lie in [0, 1]",
                self.frame_id
            )));
        }
        self.pose.intrinsics.validate()
    }

    pub fn depth_at(&self, u: usize, v: usize) -> Option<f64> {
        let d = *self.depth.get(u, v) as f64;
        (d > 0.0 && d.is_finite()).then_some(d)
    }
}
