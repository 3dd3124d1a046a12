use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    check_inputs, finalize, instances_from_labels, labels_from_instances, merge_planes,
    propagate_labels, remove_small_planes, split_by_connectivity, GroupingConfig, Grouping,
    PlaneInstance,
};
use crate::geometry::{Plane, TriMesh};
use crate::{Result, Vec3};

/// A plane hypothesis seeded from one vertex, with that vertex's embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Proposal {
    pub plane: Plane,
    pub embedding: Vec3,
}

/// Whether a vertex supports a proposal: close to its plane and, when
/// embeddings are in use, close to its embedding. A vertex without an
/// embedding never supports an embedding-gated proposal.
pub fn is_inlier(
    position: &Vec3,
    embedding: Option<&Vec3>,
    proposal: &Proposal,
    cfg: &GroupingConfig,
) -> bool {
    if proposal.plane.signed_distance(position).abs() >= cfg.r_d {
        return false;
    }
    if !cfg.use_embeddings {
        return true;
    }
    embedding.is_some_and(|e| (e - proposal.embedding).norm() < cfg.r_e)
}

/// Unassigned vertices laid out for fast scoring.
struct Pool {
    ids: Vec<usize>,
    pos: [Vec<f64>; 3],
    emb: [Vec<f64>; 3],
}

impl Pool {
    fn new(mesh: &TriMesh, ids: Vec<usize>, with_embeddings: bool) -> Self {
        let pos = [0, 1, 2].map(|a| ids.iter().map(|&v| mesh.vertices[v][a]).collect());
        let emb = match (&mesh.embeddings, with_embeddings) {
            (Some(e), true) => [0, 1, 2].map(|a| ids.iter().map(|&v| e[v][a]).collect()),
            _ => [Vec::new(), Vec::new(), Vec::new()],
        };
        Self { ids, pos, emb }
    }

    /// Positions in the pool that support the proposal. Same test as
    /// [`is_inlier`], written against the packed layout.
    fn inliers(&self, proposal: &Proposal, cfg: &GroupingConfig, out: &mut Vec<usize>) {
        out.clear();
        let n = proposal.plane.normal;
        let d = proposal.plane.offset;
        let e = proposal.embedding;
        let re2 = cfg.r_e * cfg.r_e;
        let [px, py, pz] = &self.pos;
        let gated = cfg.use_embeddings;
        for k in 0..self.ids.len() {
            let dist = n.x * px[k] + n.y * py[k] + n.z * pz[k] - d;
            if dist.abs() >= cfg.r_d {
                continue;
            }
            if gated {
                let de = [self.emb[0][k] - e.x, self.emb[1][k] - e.y, self.emb[2][k] - e.z];
                if de[0] * de[0] + de[1] * de[1] + de[2] * de[2] >= re2 {
                    continue;
                }
            }
            out.push(k);
        }
    }

    fn count(&self, proposal: &Proposal, cfg: &GroupingConfig) -> usize {
        let n = proposal.plane.normal;
        let d = proposal.plane.offset;
        let e = proposal.embedding;
        let re2 = cfg.r_e * cfg.r_e;
        let [px, py, pz] = &self.pos;
        let mut count = 0;
        if cfg.use_embeddings {
            let [ex, ey, ez] = &self.emb;
            for k in 0..self.ids.len() {
                let dist = n.x * px[k] + n.y * py[k] + n.z * pz[k] - d;
                let (a, b, c) = (ex[k] - e.x, ey[k] - e.y, ez[k] - e.z);
                count += usize::from(dist.abs() < cfg.r_d && a * a + b * b + c * c < re2);
            }
        } else {
            for k in 0..self.ids.len() {
                let dist = n.x * px[k] + n.y * py[k] + n.z * pz[k] - d;
                count += usize::from(dist.abs() < cfg.r_d);
            }
        }
        count
    }
}

/// Sequential RANSAC: each round scores `proposals_per_round` proposals
/// seeded from unassigned vertices, commits the one with most inliers
/// (refit by least squares) and removes its inliers from the pool.
///
/// Stops when the best proposal has fewer than `min_vertices` inliers, the
/// pool is empty, or `max_iterations` planes were committed.
pub fn sequential_ransac(mesh: &TriMesh, cfg: &GroupingConfig) -> Result<Grouping> {
    check_inputs(mesh, cfg, cfg.use_embeddings)?;
    let n = mesh.vertices.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut instances = Vec::new();
    let mut pool = Pool::new(mesh, (0..n).collect(), cfg.use_embeddings);
    let mut inliers = Vec::new();
    let zero = Vec3::zeros();

    while instances.len() < cfg.max_iterations && pool.ids.len() >= cfg.min_vertices {
        let m = pool.ids.len();
        let seeds: Vec<usize> = if m <= cfg.proposals_per_round {
            (0..m).collect()
        } else {
            rand::seq::index::sample(&mut rng, m, cfg.proposals_per_round).into_vec()
        };
        let mut best: Option<(usize, Proposal)> = None;
        for k in seeds {
            let v = pool.ids[k];
            let Ok(plane) = Plane::from_point_normal(&mesh.vertices[v], &mesh.normals[v]) else {
                continue;
            };
            let embedding = if cfg.use_embeddings {
                mesh.embeddings.as_ref().map_or(zero, |e| e[v])
            } else {
                zero
            };
            let proposal = Proposal { plane, embedding };
            let count = pool.count(&proposal, cfg);
            if best.is_none_or(|(c, _)| count > c) {
                best = Some((count, proposal));
            }
        }
        let Some((count, proposal)) = best else { break };
        if count < cfg.min_vertices {
            break;
        }
        pool.inliers(&proposal, cfg, &mut inliers);
        let members: Vec<usize> = inliers.iter().map(|&k| pool.ids[k]).collect();
        let id = instances.len() as i32;
        let instance = PlaneInstance::from_vertices(mesh, id, members.clone()).unwrap_or_else(|_| {
            let mut members = members.clone();
            members.sort_unstable();
            PlaneInstance {
                id,
                plane: proposal.plane,
                mean_embedding: proposal.embedding,
                mean_normal: proposal.plane.normal,
                vertex_ids: members,
            }
        });
        instances.push(instance);

        let mut taken = vec![false; m];
        for &k in &inliers {
            taken[k] = true;
        }
        let remaining = pool
            .ids
            .iter()
            .zip(&taken)
            .filter(|(_, &t)| !t)
            .map(|(&v, _)| v)
            .collect();
        pool = Pool::new(mesh, remaining, cfg.use_embeddings);
    }

    let labels = labels_from_instances(n, &instances);
    Ok(Grouping { instances, labels })
}

/// Full RANSAC grouping: sequential RANSAC, merging of similar planes (only
/// when embeddings are in use), connectivity splitting, label propagation
/// and small-plane removal.
pub fn ransac_grouping(mesh: &TriMesh, cfg: &GroupingConfig) -> Result<Grouping> {
    let raw = sequential_ransac(mesh, cfg)?;
    let instances = if cfg.use_embeddings {
        merge_planes(mesh, &raw.instances, cfg)
    } else {
        raw.instances
    };
    let labels = labels_from_instances(mesh.vertices.len(), &instances);
    let labels = split_by_connectivity(mesh, &labels);
    let labels = propagate_labels(mesh, &labels);
    let pieces = instances_from_labels(mesh, &labels);
    let (_, labels) = remove_small_planes(&pieces, &labels, cfg.min_vertices);
    Ok(finalize(mesh, &labels))
}
