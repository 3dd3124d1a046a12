//! Geometric, segmentation and planar evaluation of predicted plane meshes.

mod geometric;
mod kdtree;
mod planar;
mod segmentation;

pub use geometric::{chamfer_f1, visibility_mask, GeometryScores};
pub use kdtree::KdTree;
pub use planar::{planar_metrics, PlanarScores, PlanePoints};
pub use segmentation::{segmentation_metrics, transfer_labels, SegmentationScores};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{sample_mesh_surface, PointCloud, TriMesh, UNLABELED};
use crate::tsdf::Keyframe;
use crate::{Error, Result, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricConfig {
    pub n_sample_points: usize,
    /// Distance under which a point counts as correct for F1 (m).
    pub f1_threshold: f64,
    /// Number of largest ground-truth planes used for planar metrics.
    pub k_planes: usize,
    /// How far behind the observed depth a point may lie and still count as
    /// visible (m).
    pub visibility_margin: f64,
    pub rng_seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            n_sample_points: 200_000,
            f1_threshold: 0.05,
            k_planes: 20,
            visibility_margin: 0.05,
            rng_seed: 0,
        }
    }
}

/// Full evaluation. Distances are in centimeters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub chamfer: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub completion: f64,
    pub voi: f64,
    pub ri: f64,
    pub sc: f64,
    pub planar_fidelity: f64,
    pub planar_accuracy: f64,
    pub planar_chamfer: f64,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "chamfer,f1,accuracy,completion,voi,ri,sc,planar_fidelity,planar_accuracy,planar_chamfer";

    pub fn to_csv_row(&self) -> String {
        [
            self.chamfer,
            self.f1,
            self.accuracy,
            self.completion,
            self.voi,
            self.ri,
            self.sc,
            self.planar_fidelity,
            self.planar_accuracy,
            self.planar_chamfer,
        ]
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
    }
}

fn planes_of(cloud: &PointCloud) -> BTreeMap<i32, Vec<Vec3>> {
    let mut planes: BTreeMap<i32, Vec<Vec3>> = BTreeMap::new();
    if let Some(labels) = &cloud.labels {
        for (p, &l) in cloud.points.iter().zip(labels) {
            if l != UNLABELED {
                planes.entry(l).or_default().push(*p);
            }
        }
    }
    planes
}

/// Evaluates a labeled predicted mesh against a labeled ground-truth mesh.
///
/// Both meshes are sampled by area with the same seed, skipping faces whose
/// corners carry different labels. When keyframes are given, samples and
/// ground-truth vertices that no keyframe observed are ignored. Segmentation
/// compares ground-truth labels with labels transferred from the nearest
/// predicted vertex, ignoring unassigned vertices on either side.
pub fn evaluate(
    pred: &TriMesh,
    gt: &TriMesh,
    keyframes: Option<&[Keyframe]>,
    cfg: &MetricConfig,
) -> Result<EvaluationReport> {
    let gt_labels = gt
        .labels
        .as_deref()
        .ok_or_else(|| Error::invalid("ground-truth mesh has no plane_id labels"))?;
    pred.validate()?;
    gt.validate()?;
    let visible = |points: &[Vec3]| match keyframes {
        Some(frames) => visibility_mask(points, frames, cfg.visibility_margin),
        None => vec![true; points.len()],
    };

    let gt_cloud = sample_mesh_surface(gt, cfg.n_sample_points, true, cfg.rng_seed)?;
    let gt_cloud = gt_cloud.select(&visible(&gt_cloud.points));
    let pred_cloud = if pred.faces.is_empty() {
        PointCloud::default()
    } else {
        match sample_mesh_surface(pred, cfg.n_sample_points, true, cfg.rng_seed) {
            Ok(c) => c.select(&visible(&c.points)),
            Err(Error::Degenerate(_)) => PointCloud::default(),
            Err(e) => return Err(e),
        }
    };
    let geo = chamfer_f1(&pred_cloud, &gt_cloud, cfg.f1_threshold);

    let transferred = transfer_labels(pred, gt);
    let gt_visible = visible(&gt.vertices);
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for v in 0..gt.vertices.len() {
        if gt_visible[v] && gt_labels[v] != UNLABELED && transferred[v] != UNLABELED {
            a.push(transferred[v]);
            b.push(gt_labels[v]);
        }
    }
    let seg = if a.is_empty() {
        SegmentationScores {
            voi: f64::INFINITY,
            ri: 0.0,
            sc: 0.0,
        }
    } else {
        segmentation_metrics(&a, &b)?
    };

    let mut sizes: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in gt_labels.iter().filter(|&&l| l != UNLABELED) {
        *sizes.entry(l).or_default() += 1;
    }
    let gt_planes: Vec<PlanePoints> = planes_of(&gt_cloud)
        .into_iter()
        .map(|(l, points)| PlanePoints {
            size: sizes.get(&l).copied().unwrap_or(0),
            points,
        })
        .collect();
    let pred_planes: Vec<Vec<Vec3>> = planes_of(&pred_cloud).into_values().collect();
    let planar = planar_metrics(&pred_planes, &gt_planes, cfg.k_planes);

    const CM: f64 = 100.0;
    Ok(EvaluationReport {
        chamfer: geo.chamfer * CM,
        f1: geo.f1,
        accuracy: geo.accuracy * CM,
        completion: geo.completion * CM,
        voi: seg.voi,
        ri: seg.ri,
        sc: seg.sc,
        planar_fidelity: planar.fidelity * CM,
        planar_accuracy: planar.accuracy * CM,
        planar_chamfer: planar.chamfer * CM,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled_box() -> TriMesh {
        // two perpendicular 1 m squares, 11×11 grids, the upright one
        // starting one grid step above the floor
        let mut mesh = TriMesh::default();
        let mut labels = Vec::new();
        for (label, u, v, start) in [(0, Vec3::x(), Vec3::y(), 0.0), (1, Vec3::x(), Vec3::z(), 0.1)] {
            let base = mesh.vertices.len();
            for j in 0..11 {
                for i in 0..11 {
                    mesh.vertices.push(u * (i as f64 * 0.1) + v * (start + j as f64 * 0.1));
                    labels.push(label);
                }
            }
            for j in 0..10 {
                for i in 0..10 {
                    let a = base + j * 11 + i;
                    mesh.faces.push([a, a + 1, a + 12]);
                    mesh.faces.push([a, a + 12, a + 11]);
                }
            }
        }
        mesh.labels = Some(labels);
        mesh
    }

    fn fast() -> MetricConfig {
        MetricConfig {
            n_sample_points: 5000,
            ..Default::default()
        }
    }

    #[test]
    fn prediction_equal_to_ground_truth() {
        let gt = labeled_box();
        let r = evaluate(&gt, &gt, None, &fast()).unwrap();
        assert_eq!((r.chamfer, r.f1), (0.0, 1.0), "{r:?}");
        assert!(r.voi.abs() < 1e-12);
        assert_eq!(r.ri, 1.0);
        assert!((r.sc - 1.0).abs() < 1e-12);
        assert_eq!((r.planar_fidelity, r.planar_accuracy, r.planar_chamfer), (0.0, 0.0, 0.0));
    }

    #[test]
    fn missing_ground_truth_labels() {
        let mut gt = labeled_box();
        gt.labels = None;
        assert!(evaluate(&labeled_box(), &gt, None, &fast()).is_err());
    }

    #[test]
    fn empty_prediction_is_worst_case() {
        let r = evaluate(&TriMesh::default(), &labeled_box(), None, &fast()).unwrap();
        assert!(r.chamfer.is_infinite());
        assert_eq!(r.f1, 0.0);
        assert_eq!(r.sc, 0.0);
    }

    #[test]
    fn csv_row_has_every_field() {
        let r = evaluate(&labeled_box(), &labeled_box(), None, &fast()).unwrap();
        assert_eq!(r.to_csv_row().split(',').count(), EvaluationReport::CSV_HEADER.split(',').count());
        let json = serde_json::to_value(r).unwrap();
        for key in EvaluationReport::CSV_HEADER.split(',') {
            assert!(json.get(key).is_some(), "{key}");
        }
    }
}
