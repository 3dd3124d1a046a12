use std::collections::BTreeMap;

use super::{GroupingConfig, PlaneInstance};
use crate::geometry::{connected_components, DisjointSet, TriMesh, VertexAdjacency, UNLABELED};

/// Transitively merges instances whose mean embeddings are closer than
/// `merge_embedding` and whose mean normals have a dot product above
/// `merge_normal_dot`. A merged instance takes the smallest id of its group
/// and is refit to the union of members.
pub fn merge_planes(mesh: &TriMesh, instances: &[PlaneInstance], cfg: &GroupingConfig) -> Vec<PlaneInstance> {
    let n = instances.len();
    let mut sets = DisjointSet::new(n);
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (&instances[i], &instances[j]);
            if (a.mean_embedding - b.mean_embedding).norm() < cfg.merge_embedding
                && a.mean_normal.dot(&b.mean_normal) > cfg.merge_normal_dot
            {
                sets.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        groups.entry(sets.find(i)).or_default().push(i);
    }
    let mut merged: Vec<PlaneInstance> = groups
        .into_values()
        .map(|members| {
            if members.len() == 1 {
                return instances[members[0]].clone();
            }
            let id = members.iter().map(|&i| instances[i].id).min().unwrap();
            let vertices: Vec<usize> = members
                .iter()
                .flat_map(|&i| instances[i].vertex_ids.iter().copied())
                .collect();
            PlaneInstance::from_vertices(mesh, id, vertices)
                .expect("union of fitted instances admits a fit")
        })
        .collect();
    merged.sort_by_key(|i| i.id);
    merged
}

/// Splits every label into its edge-connected islands.
pub fn split_by_connectivity(mesh: &TriMesh, labels: &[i32]) -> Vec<i32> {
    connected_components(mesh, labels)
}

/// Grows labels into unlabeled vertices, one ring per round.
///
/// In each round every unlabeled vertex with a labeled neighbor takes the
/// most frequent label among its labeled neighbors (ties go to the lowest
/// label); all vertices of a round update together. Runs to a fixpoint.
pub fn propagate_labels(mesh: &TriMesh, labels: &[i32]) -> Vec<i32> {
    let adj = VertexAdjacency::new(mesh);
    let mut out = labels.to_vec();
    let n = out.len();
    let mut queued = vec![false; n];
    let mut frontier: Vec<usize> = Vec::new();
    for v in 0..n {
        if out[v] == UNLABELED && adj.neighbors(v).iter().any(|&u| out[u] != UNLABELED) {
            queued[v] = true;
            frontier.push(v);
        }
    }
    let mut tally: Vec<(i32, usize)> = Vec::new();
    while !frontier.is_empty() {
        let updates: Vec<(usize, i32)> = frontier
            .iter()
            .map(|&v| {
                tally.clear();
                for &u in adj.neighbors(v) {
                    let l = out[u];
                    if l == UNLABELED {
                        continue;
                    }
                    match tally.iter_mut().find(|(x, _)| *x == l) {
                        Some(entry) => entry.1 += 1,
                        None => tally.push((l, 1)),
                    }
                }
                let best = tally
                    .iter()
                    .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                    .expect("frontier vertices have a labeled neighbor");
                (v, best.0)
            })
            .collect();
        for &(v, l) in &updates {
            out[v] = l;
        }
        frontier.clear();
        for &(v, _) in &updates {
            for &u in adj.neighbors(v) {
                if out[u] == UNLABELED && !queued[u] {
                    queued[u] = true;
                    frontier.push(u);
                }
            }
        }
        frontier.sort_unstable();
    }
    out
}

/// Drops instances with fewer than `min_vertices` members. Vertices whose
/// label does not belong to a kept instance become unlabeled.
pub fn remove_small_planes(
    instances: &[PlaneInstance],
    labels: &[i32],
    min_vertices: usize,
) -> (Vec<PlaneInstance>, Vec<i32>) {
    let kept: Vec<PlaneInstance> = instances
        .iter()
        .filter(|i| i.vertex_count() >= min_vertices)
        .cloned()
        .collect();
    let ids: std::collections::HashSet<i32> = kept.iter().map(|i| i.id).collect();
    let labels = labels
        .iter()
        .map(|l| if ids.contains(l) { *l } else { UNLABELED })
        .collect();
    (kept, labels)
}
