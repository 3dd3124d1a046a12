use std::collections::HashMap;

use super::{
    check_inputs, finalize, instances_from_labels, propagate_labels, remove_small_planes,
    split_by_connectivity, GroupingConfig, Grouping,
};
use crate::geometry::TriMesh;
use crate::{Result, Vec3};

const MAX_SHIFT_ITERATIONS: usize = 100;

type Cell = [i64; 3];

fn cell_of(p: &Vec3, size: f64) -> Cell {
    [0, 1, 2].map(|a| (p[a] / size).floor() as i64)
}

/// Weighted points hashed into cubic cells of the kernel radius, so every
/// neighbor within the radius lives in the 27 surrounding cells.
struct WeightedGrid {
    points: Vec<Vec3>,
    weights: Vec<f64>,
    cells: HashMap<Cell, Vec<usize>>,
    radius: f64,
}

impl WeightedGrid {
    fn new(points: Vec<Vec3>, weights: Vec<f64>, radius: f64) -> Self {
        let mut cells: HashMap<Cell, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(cell_of(p, radius)).or_default().push(i);
        }
        Self {
            points,
            weights,
            cells,
            radius,
        }
    }

    /// Weighted mean and total weight of the points within the radius.
    fn window(&self, x: &Vec3) -> (Vec3, f64) {
        let c = cell_of(x, self.radius);
        let r2 = self.radius * self.radius;
        let mut sum = Vec3::zeros();
        let mut total = 0.0;
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let Some(ids) = self.cells.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) else {
                        continue;
                    };
                    for &i in ids {
                        if (self.points[i] - x).norm_squared() <= r2 {
                            sum += self.points[i] * self.weights[i];
                            total += self.weights[i];
                        }
                    }
                }
            }
        }
        (if total > 0.0 { sum / total } else { *x }, total)
    }
}

/// Flat-kernel mean shift over `points`.
///
/// Points are first pooled into cells of a quarter bandwidth (each cell
/// becomes one weighted sample at its centroid); every cell seeds a
/// trajectory. Converged modes are kept in order of decreasing support,
/// dropping any mode within half a bandwidth of a kept one. Returns the
/// modes and, per point, the index of its nearest mode.
pub fn mean_shift_modes(points: &[Vec3], bandwidth: f64) -> (Vec<Vec3>, Vec<usize>) {
    if points.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let bin = bandwidth / 4.0;
    let mut bin_index: HashMap<Cell, usize> = HashMap::new();
    let mut sums: Vec<Vec3> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for p in points {
        let k = *bin_index.entry(cell_of(p, bin)).or_insert_with(|| {
            sums.push(Vec3::zeros());
            counts.push(0.0);
            sums.len() - 1
        });
        sums[k] += p;
        counts[k] += 1.0;
    }
    let centers: Vec<Vec3> = sums.iter().zip(&counts).map(|(s, c)| s / *c).collect();
    let grid = WeightedGrid::new(centers.clone(), counts, bandwidth);

    let tolerance = 1e-4 * bandwidth;
    let mut converged: Vec<(Vec3, f64, usize)> = centers
        .iter()
        .enumerate()
        .map(|(i, &start)| {
            let mut x = start;
            let mut support = 0.0;
            for _ in 0..MAX_SHIFT_ITERATIONS {
                let (next, w) = grid.window(&x);
                support = w;
                let shift = (next - x).norm();
                x = next;
                if shift < tolerance {
                    break;
                }
            }
            (x, support, i)
        })
        .collect();
    converged.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)));

    let merge_radius = bandwidth / 2.0;
    let mut modes: Vec<Vec3> = Vec::new();
    for (x, _, _) in converged {
        if modes.iter().all(|m| (m - x).norm() >= merge_radius) {
            modes.push(x);
        }
    }

    let assignment = points
        .iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for (k, m) in modes.iter().enumerate() {
                let d = (m - p).norm_squared();
                if d < best.0 {
                    best = (d, k);
                }
            }
            best.1
        })
        .collect();
    (modes, assignment)
}

/// Mean-shift grouping in embedding space followed by connectivity
/// splitting, label propagation and small-plane removal.
pub fn mean_shift_grouping(mesh: &TriMesh, cfg: &GroupingConfig) -> Result<Grouping> {
    check_inputs(mesh, cfg, true)?;
    let Some(embeddings) = &mesh.embeddings else {
        return Ok(Grouping::default());
    };
    let (_, assignment) = mean_shift_modes(embeddings, cfg.bandwidth);
    let labels: Vec<i32> = assignment.iter().map(|&k| k as i32).collect();
    let labels = split_by_connectivity(mesh, &labels);
    let labels = propagate_labels(mesh, &labels);
    let pieces = instances_from_labels(mesh, &labels);
    let (_, labels) = remove_small_planes(&pieces, &labels, cfg.min_vertices);
    Ok(finalize(mesh, &labels))
}
