//! Grouping mesh vertices into plane instances.

mod hungarian;
mod meanshift;
mod ransac;
mod refine;
mod tracking;

pub use hungarian::{solve_assignment, Assignment};
pub use meanshift::{mean_shift_grouping, mean_shift_modes};
pub use ransac::{is_inlier, ransac_grouping, sequential_ransac, Proposal};
pub use refine::{merge_planes, propagate_labels, remove_small_planes, split_by_connectivity};
pub use tracking::{track_planes, PlaneTracker, TrackedPlane, Tracking};

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{Plane, TriMesh, UNLABELED};
use crate::planarize::fit_plane;
use crate::{Error, Result, Vec3};

/// One plane instance: its fitted plane, member vertices and the mean
/// embedding and normal of its members.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneInstance {
    pub id: i32,
    pub plane: Plane,
    /// Sorted member vertex indices.
    pub vertex_ids: Vec<usize>,
    pub mean_embedding: Vec3,
    pub mean_normal: Vec3,
}

impl PlaneInstance {
    /// Fits a plane to the given vertices and averages their attributes.
    /// Fails when the vertices are too few or collinear.
    pub fn from_vertices(mesh: &TriMesh, id: i32, mut vertex_ids: Vec<usize>) -> Result<Self> {
        vertex_ids.sort_unstable();
        vertex_ids.dedup();
        if vertex_ids.is_empty() {
            return Err(Error::Degenerate("plane instance without vertices".into()));
        }
        let n = vertex_ids.len() as f64;
        let points: Vec<Vec3> = vertex_ids.iter().map(|&v| mesh.vertices[v]).collect();
        let normal_sum = if mesh.has_normals() {
            vertex_ids.iter().map(|&v| mesh.normals[v]).sum::<Vec3>()
        } else {
            Vec3::zeros()
        };
        let orientation = normal_sum.try_normalize(1e-12);
        let plane = fit_plane(&points, orientation.as_ref())?;
        let mean_embedding = match &mesh.embeddings {
            Some(e) => vertex_ids.iter().map(|&v| e[v]).sum::<Vec3>() / n,
            None => Vec3::zeros(),
        };
        Ok(Self {
            id,
            plane,
            vertex_ids,
            mean_embedding,
            mean_normal: orientation.unwrap_or(plane.normal),
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }
}

/// Builds one instance per non-negative label, ordered by label. Labels
/// whose vertices admit no plane fit are skipped.
pub fn instances_from_labels(mesh: &TriMesh, labels: &[i32]) -> Vec<PlaneInstance> {
    let mut members: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
    for (v, &l) in labels.iter().enumerate() {
        if l != UNLABELED {
            members.entry(l).or_default().push(v);
        }
    }
    members
        .into_iter()
        .filter_map(|(id, vs)| PlaneInstance::from_vertices(mesh, id, vs).ok())
        .collect()
}

/// Per-vertex labels for a set of disjoint instances.
pub fn labels_from_instances(num_vertices: usize, instances: &[PlaneInstance]) -> Vec<i32> {
    let mut labels = vec![UNLABELED; num_vertices];
    for inst in instances {
        for &v in &inst.vertex_ids {
            labels[v] = inst.id;
        }
    }
    labels
}

/// Clustering algorithm used for grouping.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingMethod {
    #[default]
    Ransac,
    MeanShift,
}

impl FromStr for GroupingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ransac" => Ok(Self::Ransac),
            "meanshift" | "mean-shift" => Ok(Self::MeanShift),
            other => Err(Error::invalid(format!("unknown grouping method {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupingConfig {
    /// Inlier distance to the proposal plane (m).
    pub r_d: f64,
    /// Inlier distance to the proposal embedding.
    pub r_e: f64,
    /// Instances whose mean embeddings are closer than this may merge.
    pub merge_embedding: f64,
    /// Instances whose mean normals have a larger dot product may merge.
    pub merge_normal_dot: f64,
    pub min_vertices: usize,
    pub max_iterations: usize,
    pub proposals_per_round: usize,
    /// When off, grouping is purely geometric and embeddings are never read.
    pub use_embeddings: bool,
    /// Mean-shift kernel radius in embedding space.
    pub bandwidth: f64,
    pub rng_seed: u64,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            r_d: 0.1,
            r_e: 0.5,
            merge_embedding: 0.2,
            merge_normal_dot: 0.6,
            min_vertices: 100,
            max_iterations: 64,
            proposals_per_round: 256,
            use_embeddings: true,
            bandwidth: 0.25,
            rng_seed: 0,
        }
    }
}

impl GroupingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("r_d", self.r_d),
            ("r_e", self.r_e),
            ("merge_embedding", self.merge_embedding),
            ("merge_normal_dot", self.merge_normal_dot),
            ("bandwidth", self.bandwidth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.min_vertices == 0 || self.max_iterations == 0 || self.proposals_per_round == 0 {
            return Err(Error::invalid(
                "min_vertices, max_iterations and proposals_per_round must be positive",
            ));
        }
        Ok(())
    }
}

/// Result of grouping: final instances and one label per vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Grouping {
    pub instances: Vec<PlaneInstance>,
    pub labels: Vec<i32>,
}

/// Renumbers labels `0..k` by decreasing instance size (ties: lowest
/// member vertex first) and rebuilds the instances.
pub(crate) fn finalize(mesh: &TriMesh, labels: &[i32]) -> Grouping {
    let mut instances = instances_from_labels(mesh, labels);
    instances.sort_by(|a, b| {
        b.vertex_count()
            .cmp(&a.vertex_count())
            .then(a.vertex_ids[0].cmp(&b.vertex_ids[0]))
    });
    for (i, inst) in instances.iter_mut().enumerate() {
        inst.id = i as i32;
    }
    let labels = labels_from_instances(mesh.vertices.len(), &instances);
    Grouping { instances, labels }
}

/// Runs the chosen grouping method on a mesh with normals (and embeddings
/// when `cfg.use_embeddings` is on).
pub fn group_planes(mesh: &TriMesh, method: GroupingMethod, cfg: &GroupingConfig) -> Result<Grouping> {
    match method {
        GroupingMethod::Ransac => ransac_grouping(mesh, cfg),
        GroupingMethod::MeanShift => mean_shift_grouping(mesh, cfg),
    }
}

pub(crate) fn check_inputs(mesh: &TriMesh, cfg: &GroupingConfig, need_embeddings: bool) -> Result<()> {
    cfg.validate()?;
    mesh.validate()?;
    if !mesh.is_empty() && !mesh.has_normals() {
        return Err(Error::invalid("grouping needs vertex normals"));
    }
    if need_embeddings && !mesh.is_empty() && mesh.embeddings.is_none() {
        return Err(Error::invalid("grouping with embeddings needs vertex embeddings"));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod test_meshes {
    use super::*;

    /// Regular grid of `nx × ny` vertices spanning `origin + a·u + b·v`.
    pub fn grid(nx: usize, ny: usize, origin: Vec3, u: Vec3, v: Vec3) -> TriMesh {
        let mut mesh = TriMesh::default();
        let normal = u.cross(&v).normalize();
        for j in 0..ny {
            for i in 0..nx {
                mesh.vertices.push(origin + u * i as f64 + v * j as f64);
                mesh.normals.push(normal);
            }
        }
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                mesh.faces.push([a, a + 1, a + nx + 1]);
                mesh.faces.push([a, a + nx + 1, a + nx]);
            }
        }
        mesh
    }

    /// Appends `other` to `mesh`, offsetting its face indices.
    pub fn append(mesh: &mut TriMesh, other: &TriMesh) {
        let base = mesh.vertices.len();
        mesh.vertices.extend_from_slice(&other.vertices);
        mesh.normals.extend_from_slice(&other.normals);
        mesh.faces
            .extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        match (&mut mesh.embeddings, &other.embeddings) {
            (Some(a), Some(b)) => a.extend_from_slice(b),
            (None, None) => {}
            _ => panic!("embedding presence must match"),
        }
    }

    pub fn with_embedding(mut mesh: TriMesh, e: Vec3) -> TriMesh {
        mesh.embeddings = Some(vec![e; mesh.vertices.len()]);
        mesh
    }
}
