use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{PointCloud, TriMesh};
use crate::{Error, Result};

/// Samples `n_points` points uniformly by area over the mesh surface.
///
/// With `exclude_ambiguous_faces`, faces whose corners carry two or more
/// distinct labels contribute no samples. Samples take the label of their
/// face when it is unanimous, otherwise the label of the corner with the
/// largest barycentric weight.
pub fn sample_mesh_surface(
    mesh: &TriMesh,
    n_points: usize,
    exclude_ambiguous_faces: bool,
    rng_seed: u64,
) -> Result<PointCloud> {
    if mesh.faces.is_empty() {
        return Err(Error::invalid("cannot sample an empty mesh"));
    }
    let total_area: f64 = (0..mesh.faces.len()).map(|f| mesh.face_area(f)).sum();
    if !(total_area > 0.0) {
        return Err(Error::Degenerate("mesh has zero surface area".into()));
    }
    let labels = mesh.labels.as_deref();
    let eligible = |f: &[usize; 3]| match labels {
        Some(l) if exclude_ambiguous_faces => l[f[0]] == l[f[1]] && l[f[1]] == l[f[2]],
        _ => true,
    };

    let mut faces = Vec::new();
    let mut cumulative = Vec::new();
    let mut acc = 0.0;
    for (i, f) in mesh.faces.iter().enumerate() {
        let a = mesh.face_area(i);
        if a > 0.0 && eligible(f) {
            acc += a;
            faces.push(i);
            cumulative.push(acc);
        }
    }
    let mut cloud = PointCloud {
        points: Vec::with_capacity(n_points),
        labels: labels.map(|_| Vec::with_capacity(n_points)),
    };
    if faces.is_empty() || n_points == 0 {
        return Ok(cloud);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    for _ in 0..n_points {
        let r = rng.random::<f64>() * acc;
        let k = cumulative.partition_point(|&c| c <= r).min(faces.len() - 1);
        let [a, b, c] = mesh.faces[faces[k]];
        let s = rng.random::<f64>().sqrt();
        let t = rng.random::<f64>();
        let w = [1.0 - s, s * (1.0 - t), s * t];
        let p = mesh.vertices[a] * w[0] + mesh.vertices[b] * w[1] + mesh.vertices[c] * w[2];
        cloud.points.push(p);
        if let (Some(l), Some(out)) = (labels, cloud.labels.as_mut()) {
            let corners = [a, b, c];
            let label = if l[a] == l[b] && l[b] == l[c] {
                l[a]
            } else {
                let best = (0..3)
                    .max_by(|&i, &j| w[i].total_cmp(&w[j]).then(j.cmp(&i)))
                    .unwrap();
                l[corners[best]]
            };
            out.push(label);
        }
    }
    Ok(cloud)
}
