//! Least-squares plane fitting and projection of labeled meshes onto their
//! planes.

use std::collections::HashMap;

use nalgebra::{Matrix3, SymmetricEigen};

use crate::geometry::{Plane, TriMesh};
use crate::grouping::PlaneInstance;
use crate::{Error, Result, Vec3};

/// Total-least-squares plane through `points`.
///
/// The normal is the eigenvector of the smallest covariance eigenvalue. When
/// `orientation` is given the normal is flipped to agree with it.
pub fn fit_plane(points: &[Vec3], orientation: Option<&Vec3>) -> Result<Plane> {
    if points.len() < 3 {
        return Err(Error::Degenerate(format!(
            "plane fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (mid, largest) = (eig.eigenvalues[order[1]], eig.eigenvalues[order[2]]);
    if !(largest > 0.0) || mid <= 1e-12 * largest {
        return Err(Error::Degenerate("points are collinear or coincident".into()));
    }
    let mut normal: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    // The iterative solver can leave errors near 1e-4 when the two in-plane
    // eigenvalues coincide; inverse iteration restores full precision. The
    // shift sits just below the smallest eigenvalue so the solve never hits
    // an exactly singular matrix.
    let shift = eig.eigenvalues[order[0]] - 1e-10 * largest;
    let shifted = cov - Matrix3::identity() * shift;
    let lu = shifted.lu();
    for _ in 0..3 {
        match lu.solve(&normal).and_then(|x| x.try_normalize(0.0)) {
            Some(x) => normal = x,
            None => break,
        }
    }
    if let Some(o) = orientation {
        if normal.dot(o) < 0.0 {
            normal = -normal;
        }
    }
    Plane::from_point_normal(&centroid, &normal)
}

/// Projects every labeled vertex onto its instance plane. Unlabeled vertices
/// (and vertices whose label has no instance) are dropped with their faces;
/// faces spanning two labels are dropped too.
pub fn planarize_mesh(mesh: &TriMesh, instances: &[PlaneInstance]) -> TriMesh {
    let Some(labels) = mesh.labels.as_deref() else {
        return TriMesh::default();
    };
    let planes: HashMap<i32, &Plane> = instances.iter().map(|i| (i.id, &i.plane)).collect();
    let keep: Vec<bool> = labels.iter().map(|l| planes.contains_key(l)).collect();
    let mut projected = mesh.clone();
    projected
        .faces
        .retain(|f| labels[f[0]] == labels[f[1]] && labels[f[1]] == labels[f[2]]);
    for (v, p) in projected.vertices.iter_mut().enumerate() {
        if let Some(plane) = planes.get(&labels[v]) {
            *p = plane.project(p);
            if let Some(n) = projected.normals.get_mut(v) {
                *n = if n.dot(&plane.normal) < 0.0 { -plane.normal } else { plane.normal };
            }
        }
    }
    projected.filter_vertices(&keep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(id: i32, plane: Plane) -> PlaneInstance {
        PlaneInstance {
            id,
            plane,
            vertex_ids: vec![],
            mean_embedding: Vec3::zeros(),
            mean_normal: plane.normal,
        }
    }

    #[test]
    fn unit_square() {
        let pts = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
        ];
        let p = fit_plane(&pts, None).unwrap();
        assert!((p.normal.z.abs() - 1.0).abs() < 1e-12);
        assert!(p.offset.abs() < 1e-12);
        let up = fit_plane(&pts, Some(&Vec3::new(0.0, 0.0, -2.0))).unwrap();
        assert!((up.normal.z + 1.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_tilted_plane_is_exact() {
        // oracle: points constructed as d·n + a·u + b·w with u, w ⟂ n
        let n = Vec3::new(1.0, 1.0, 1.0).normalize();
        let u = Vec3::new(1.0, -1.0, 0.0).normalize();
        let w = n.cross(&u);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec3> = (0..50)
            .map(|_| n * 2.0 + u * rng.random_range(-3.0..3.0) + w * rng.random_range(-3.0..3.0))
            .collect();
        let p = fit_plane(&pts, Some(&n)).unwrap();
        assert!((p.normal - n).norm() < 1e-9);
        assert!((p.offset - 2.0).abs() < 1e-9);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_plane(&[Vec3::zeros(), Vec3::x()], None).is_err());
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(fit_plane(&line, None).is_err());
    }

    #[test]
    fn rigid_transform_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec3> = (0..40)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.01..0.01),
                )
            })
            .collect();
        let rot = nalgebra::Rotation3::from_euler_angles(0.4, -1.2, 2.0);
        let t = Vec3::new(0.5, -3.0, 1.0);
        let moved: Vec<Vec3> = pts.iter().map(|p| rot * p + t).collect();
        let a = fit_plane(&pts, None).unwrap();
        let b = fit_plane(&moved, None).unwrap();
        let expected_n = rot * a.normal;
        let sign = expected_n.dot(&b.normal).signum();
        assert!((expected_n - b.normal * sign).norm() < 1e-9);
        assert!((a.offset + expected_n.dot(&t) - b.offset * sign).abs() < 1e-9);
    }

    fn grid(labels: Vec<i32>) -> TriMesh {
        // 3×2 vertex strip on z ≈ 0
        let mut mesh = TriMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.3),
                Vec3::new(1.0, 0.0, -0.1),
                Vec3::new(2.0, 0.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
                Vec3::new(1.0, 1.0, 0.2),
                Vec3::new(2.0, 1.0, 0.0),
            ],
            vec![[0, 1, 4], [0, 4, 3], [1, 2, 5], [1, 5, 4]],
        );
        mesh.labels = Some(labels);
        mesh
    }

    #[test]
    fn projection_residual_and_idempotence() {
        let mesh = grid(vec![0; 6]);
        let inst = [instance(0, Plane::new(Vec3::z(), 0.0).unwrap())];
        let flat = planarize_mesh(&mesh, &inst);
        assert_eq!(flat.faces.len(), 4);
        assert!(flat.vertices.iter().all(|p| p.z.abs() < 1e-12));
        let again = planarize_mesh(&flat, &inst);
        assert_eq!(again, flat);
    }

    #[test]
    fn unlabeled_and_cross_plane_faces_dropped() {
        let mesh = grid(vec![0, 0, 1, 0, 0, -1]);
        let inst = [
            instance(0, Plane::new(Vec3::z(), 0.0).unwrap()),
            instance(1, Plane::new(Vec3::z(), 0.5).unwrap()),
        ];
        let flat = planarize_mesh(&mesh, &inst);
        assert_eq!(flat.num_vertices(), 5);
        assert_eq!(flat.faces.len(), 2);
        assert!(flat.labels.as_ref().unwrap().iter().all(|&l| l >= 0));
        assert!(planarize_mesh(&grid(vec![-1; 6]), &inst).is_empty());
    }
}
