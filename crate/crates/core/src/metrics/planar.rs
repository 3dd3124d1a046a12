use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::Vec3;

/// Sampled points of one plane together with its size (vertex count), used
/// to rank ground-truth planes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlanePoints {
    pub size: usize,
    pub points: Vec<Vec3>,
}

/// Per-plane comparison of the largest ground-truth planes with their best
/// matching predictions. Distances are in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanarScores {
    pub fidelity: f64,
    pub accuracy: f64,
    pub chamfer: f64,
    /// Number of ground-truth planes averaged over.
    pub planes: usize,
}

impl PlanarScores {
    pub fn worst() -> Self {
        Self {
            fidelity: f64::INFINITY,
            accuracy: f64::INFINITY,
            chamfer: f64::INFINITY,
            planes: 0,
        }
    }
}

fn mean_distance(from: &[Vec3], to: &KdTree) -> f64 {
    to.distances(from).iter().sum::<f64>() / from.len() as f64
}

/// For each of the `k` largest ground-truth planes (by size; ties keep
/// input order), picks the predicted plane with the lowest completion
/// (mean distance from the ground-truth points to the prediction). Fidelity
/// averages those completions, accuracy averages the reverse distances of
/// the same matches, and chamfer is their mean. A prediction may match
/// several ground-truth planes.
///
/// Ground-truth planes without points are skipped; with no usable
/// predicted plane the scores are infinite.
pub fn planar_metrics(pred: &[Vec<Vec3>], gt: &[PlanePoints], k: usize) -> PlanarScores {
    let pred: Vec<(&Vec<Vec3>, KdTree)> = pred
        .iter()
        .filter(|p| !p.is_empty())
        .map(|p| (p, KdTree::new(p)))
        .collect();
    if pred.is_empty() {
        return PlanarScores::worst();
    }
    let mut order: Vec<usize> = (0..gt.len()).filter(|&i| !gt[i].points.is_empty()).collect();
    order.sort_by(|&a, &b| gt[b].size.cmp(&gt[a].size).then(a.cmp(&b)));
    order.truncate(k);
    if order.is_empty() {
        return PlanarScores::worst();
    }
    let (mut fidelity, mut accuracy) = (0.0, 0.0);
    for &g in &order {
        let target = &gt[g].points;
        let (best, completion) = pred
            .iter()
            .enumerate()
            .map(|(i, (_, tree))| (i, mean_distance(target, tree)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("at least one predicted plane");
        fidelity += completion;
        accuracy += mean_distance(pred[best].0, &KdTree::new(target));
    }
    let n = order.len() as f64;
    let (fidelity, accuracy) = (fidelity / n, accuracy / n);
    PlanarScores {
        fidelity,
        accuracy,
        chamfer: (fidelity + accuracy) / 2.0,
        planes: order.len(),
    }
}
