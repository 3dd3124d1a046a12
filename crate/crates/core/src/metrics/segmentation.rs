use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::kdtree::KdTree;
use crate::geometry::{TriMesh, UNLABELED};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationScores {
    pub voi: f64,
    pub ri: f64,
    pub sc: f64,
}

/// Label of the nearest predicted vertex for every ground-truth vertex
/// (ties to the lowest predicted vertex index). All `-1` when the
/// prediction has no vertices or no labels.
pub fn transfer_labels(pred: &TriMesh, gt: &TriMesh) -> Vec<i32> {
    let Some(labels) = pred.labels.as_deref() else {
        return vec![UNLABELED; gt.vertices.len()];
    };
    let tree = KdTree::new(&pred.vertices);
    gt.vertices
        .iter()
        .map(|p| tree.nearest(p).map_or(UNLABELED, |(i, _)| labels[i]))
        .collect()
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Variation of information (natural log), Rand index, and covering of the
/// ground-truth regions by the predicted ones, `(1/n) Σ_R |R| max IoU(R, ·)`.
///
/// Labels must be non-negative; unassigned elements are filtered out by the
/// caller. Two empty labelings count as identical.
pub fn segmentation_metrics(pred: &[i32], gt: &[i32]) -> Result<SegmentationScores> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    if pred.iter().chain(gt).any(|&l| l < 0) {
        return Err(Error::invalid("segmentation labels must be non-negative"));
    }
    let n = pred.len();
    if n == 0 {
        return Ok(SegmentationScores {
            voi: 0.0,
            ri: 1.0,
            sc: 1.0,
        });
    }
    let mut joint: BTreeMap<(i32, i32), usize> = BTreeMap::new();
    let mut a: BTreeMap<i32, usize> = BTreeMap::new();
    let mut b: BTreeMap<i32, usize> = BTreeMap::new();
    for (&p, &g) in pred.iter().zip(gt) {
        *joint.entry((p, g)).or_default() += 1;
        *a.entry(p).or_default() += 1;
        *b.entry(g).or_default() += 1;
    }
    let nf = n as f64;
    let h_joint = entropy(joint.values().copied(), nf);
    let h_a = entropy(a.values().copied(), nf);
    let h_b = entropy(b.values().copied(), nf);
    let voi = (2.0 * h_joint - h_a - h_b).max(0.0);

    let ri = if n < 2 {
        1.0
    } else {
        let sq = |counts: &mut dyn Iterator<Item = &usize>| counts.map(|&c| (c * c) as f64).sum::<f64>();
        let pairs = nf * (nf - 1.0) / 2.0;
        let (s_joint, s_a, s_b) = (sq(&mut joint.values()), sq(&mut a.values()), sq(&mut b.values()));
        (pairs + s_joint - 0.5 * (s_a + s_b)) / pairs
    };

    let mut best_iou: BTreeMap<i32, f64> = BTreeMap::new();
    for (&(p, g), &c) in &joint {
        let iou = c as f64 / (a[&p] + b[&g] - c) as f64;
        let e = best_iou.entry(g).or_default();
        *e = e.max(iou);
    }
    let sc = b.iter().map(|(g, &size)| size as f64 * best_iou[g]).sum::<f64>() / nf;

    Ok(SegmentationScores { voi, ri, sc })
}
