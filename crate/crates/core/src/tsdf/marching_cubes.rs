use std::collections::HashMap;

use super::tables::{CORNERS, EDGES, TRIANGLES};
use super::TsdfVolume;
use crate::geometry::TriMesh;
use crate::Vec3;

/// Central-difference gradient of the tsdf at a grid sample, falling back to
/// one-sided differences next to unobserved voxels or the volume border.
fn gradient(vol: &TsdfVolume, c: [usize; 3]) -> Vec3 {
    let dims = vol.dims();
    let at = |p: [usize; 3]| {
        let idx = vol.index(p[0], p[1], p[2]);
        (vol.weight[idx] > 0.0).then(|| vol.tsdf[idx] as f64)
    };
    let center = at(c).unwrap_or(0.0);
    let mut g = Vec3::zeros();
    for axis in 0..3 {
        let mut lo = c;
        let mut hi = c;
        let lo_v = (c[axis] > 0)
            .then(|| {
                lo[axis] -= 1;
                at(lo)
            })
            .flatten();
        let hi_v = (c[axis] + 1 < dims[axis])
            .then(|| {
                hi[axis] += 1;
                at(hi)
            })
            .flatten();
        g[axis] = match (lo_v, hi_v) {
            (Some(a), Some(b)) => (b - a) / 2.0,
            (None, Some(b)) => b - center,
            (Some(a), None) => center - a,
            (None, None) => 0.0,
        };
    }
    g
}

pub(super) fn extract(vol: &TsdfVolume, planar_threshold: f64) -> TriMesh {
    let [nx, ny, nz] = vol.dims();
    let threshold = planar_threshold as f32;
    let mut vertices = Vec::new();
    let mut grads = Vec::new();
    let mut keys = Vec::new();
    let mut faces = Vec::new();
    let mut key_to_vertex: HashMap<u64, usize> = HashMap::new();

    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            'cube: for i in 0..nx - 1 {
                let mut values = [0f32; 8];
                let mut case = 0usize;
                for (c, off) in CORNERS.iter().enumerate() {
                    let idx = vol.index(i + off[0], j + off[1], k + off[2]);
                    if vol.weight[idx] <= 0.0 || vol.planar_prob[idx] < threshold {
                        continue 'cube;
                    }
                    values[c] = vol.tsdf[idx];
                    if values[c] < 0.0 {
                        case |= 1 << c;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let mut edge_vertex = [usize::MAX; 12];
                let row = &TRIANGLES[case];
                for tri in row.chunks(3).take_while(|t| t[0] >= 0) {
                    let mut face = [0usize; 3];
                    for (slot, &e) in tri.iter().enumerate() {
                        let e = e as usize;
                        if edge_vertex[e] == usize::MAX {
                            let [a, b] = EDGES[e];
                            let (ca, cb) = (CORNERS[a], CORNERS[b]);
                            let pa = [i + ca[0], j + ca[1], k + ca[2]];
                            let pb = [i + cb[0], j + cb[1], k + cb[2]];
                            // edge key: lower endpoint and axis
                            let lower = if vol.index(pa[0], pa[1], pa[2])
                                < vol.index(pb[0], pb[1], pb[2])
                            {
                                pa
                            } else {
                                pb
                            };
                            let axis = (0..3).find(|&ax| ca[ax] != cb[ax]).unwrap();
                            let key =
                                vol.index(lower[0], lower[1], lower[2]) as u64 * 3 + axis as u64;
                            let v = *key_to_vertex.entry(key).or_insert_with(|| {
                                let (va, vb) = (values[a] as f64, values[b] as f64);
                                let t = if va == vb { 0.5 } else { va / (va - vb) };
                                let xa = vol.position(pa[0], pa[1], pa[2]);
                                let xb = vol.position(pb[0], pb[1], pb[2]);
                                vertices.push(xa + (xb - xa) * t);
                                grads.push(gradient(vol, pa) * (1.0 - t) + gradient(vol, pb) * t);
                                keys.push(key);
                                vertices.len() - 1
                            });
                            edge_vertex[e] = v;
                        }
                        face[slot] = edge_vertex[e];
                    }
                    faces.push(face);
                }
            }
        }
    }

    // Fall back to area-weighted face normals where the tsdf gradient vanishes.
    let mut normals: Vec<Vec3> = grads;
    let degenerate: Vec<usize> = (0..normals.len())
        .filter(|&v| normals[v].norm() < 1e-12)
        .collect();
    if !degenerate.is_empty() {
        let mut acc = vec![Vec3::zeros(); vertices.len()];
        for f in &faces {
            let n = (vertices[f[1]] - vertices[f[0]]).cross(&(vertices[f[2]] - vertices[f[0]]));
            for &v in f {
                acc[v] += n;
            }
        }
        for v in degenerate {
            normals[v] = acc[v];
        }
    }
    for n in &mut normals {
        *n = n.try_normalize(1e-300).unwrap_or_else(Vec3::z);
    }

    TriMesh {
        vertices,
        faces,
        normals,
        labels: None,
        embeddings: None,
        vertex_keys: Some(keys),
    }
}
