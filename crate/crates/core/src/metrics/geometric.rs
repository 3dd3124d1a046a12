use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::geometry::PointCloud;
use crate::tsdf::Keyframe;
use crate::Vec3;

/// Point-cloud comparison scores. Distances are in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryScores {
    /// Mean distance from predicted points to the ground truth.
    pub accuracy: f64,
    /// Mean distance from ground-truth points to the prediction.
    pub completion: f64,
    pub chamfer: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl GeometryScores {
    /// Scores for a comparison where one side is empty.
    pub fn worst() -> Self {
        Self {
            accuracy: f64::INFINITY,
            completion: f64::INFINITY,
            chamfer: f64::INFINITY,
            precision: 0.0,
            recall: 0.0,
            f1: 0.0,
        }
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Accuracy, completion, chamfer and F1 at `threshold` between two clouds.
pub fn chamfer_f1(pred: &PointCloud, gt: &PointCloud, threshold: f64) -> GeometryScores {
    if pred.is_empty() || gt.is_empty() {
        return GeometryScores::worst();
    }
    let pred_to_gt = KdTree::new(&gt.points).distances(&pred.points);
    let gt_to_pred = KdTree::new(&pred.points).distances(&gt.points);
    let accuracy = mean(&pred_to_gt);
    let completion = mean(&gt_to_pred);
    let frac = |d: &[f64]| d.iter().filter(|&&x| x < threshold).count() as f64 / d.len() as f64;
    let precision = frac(&pred_to_gt);
    let recall = frac(&gt_to_pred);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    GeometryScores {
        accuracy,
        completion,
        chamfer: (accuracy + completion) / 2.0,
        precision,
        recall,
        f1,
    }
}

/// Whether each point was seen by at least one keyframe: it projects inside
/// the image in front of the camera onto a valid depth pixel, and lies no
/// more than `margin` behind the observed depth.
pub fn visibility_mask(points: &[Vec3], keyframes: &[Keyframe], margin: f64) -> Vec<bool> {
    let mut visible = vec![false; points.len()];
    for frame in keyframes {
        let (w, h) = (frame.width() as f64, frame.height() as f64);
        for (p, seen) in points.iter().zip(visible.iter_mut()) {
            if *seen {
                continue;
            }
            let Some((u, v, z)) = frame.pose.project(p) else {
                continue;
            };
            let (u, v) = (u.round(), v.round());
            if u < 0.0 || v < 0.0 || u >= w || v >= h {
                continue;
            }
            if let Some(d) = frame.depth_at(u as usize, v as usize) {
                *seen = z <= d + margin;
            }
        }
    }
    visible
}
