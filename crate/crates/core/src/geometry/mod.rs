//! Geometric primitives shared by every stage of the pipeline.

mod components;
mod normals;
mod sampling;

pub(crate) use components::DisjointSet;
pub use components::{connected_components, VertexAdjacency};
pub use normals::{normals_from_depth, normals_from_depth_strided};
pub use sampling::sample_mesh_surface;

use nalgebra::{Isometry3, Matrix3, Matrix4, Point3, Rotation3, Translation3, UnitQuaternion};

use crate::{Error, Result, Vec3};

/// Sentinel for vertices that belong to no plane instance.
pub const UNLABELED: i32 = -1;

/// Indexed triangle mesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriMesh {
    pub vertices: Vec<Vec3>,
    pub faces: Vec<[usize; 3]>,
    /// Unit normals, one per vertex, or empty when unknown.
    pub normals: Vec<Vec3>,
    pub labels: Option<Vec<i32>>,
    pub embeddings: Option<Vec<Vec3>>,
    /// Identifiers that stay stable when the same surface is re-extracted
    /// (marching-cubes edge ids). Used to track planes across keyframes.
    pub vertex_keys: Option<Vec<u64>>,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Self {
        Self {
            vertices,
            faces,
            ..Default::default()
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        !self.vertices.is_empty() && self.normals.len() == self.vertices.len()
    }

    pub fn label(&self, v: usize) -> i32 {
        self.labels.as_ref().map_or(UNLABELED, |l| l[v])
    }

    pub fn face_area(&self, f: usize) -> f64 {
        let [a, b, c] = self.faces[f];
        let (a, b, c) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(f) = self.faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!(
                "face {f:?} references a vertex out of range (n = {n})"
            )));
        }
        if !self.normals.is_empty() {
            if self.normals.len() != n {
                return Err(Error::LengthMismatch(self.normals.len(), n));
            }
            if let Some(bad) = self.normals.iter().find(|v| (v.norm() - 1.0).abs() > 1e-6) {
                return Err(Error::invalid(format!("normal {bad:?} is not unit length")));
            }
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::LengthMismatch(labels.len(), n));
            }
        }
        if let Some(emb) = &self.embeddings {
            if emb.len() != n {
                return Err(Error::LengthMismatch(emb.len(), n));
            }
        }
        if let Some(keys) = &self.vertex_keys {
            if keys.len() != n {
                return Err(Error::LengthMismatch(keys.len(), n));
            }
        }
        Ok(())
    }

    /// Keeps the vertices for which `keep` is true and every face whose three
    /// corners are kept. Per-vertex attributes follow their vertices.
    pub fn filter_vertices(&self, keep: &[bool]) -> TriMesh {
        let mut remap = vec![usize::MAX; self.vertices.len()];
        let mut next = 0;
        for (v, &k) in keep.iter().enumerate() {
            if k {
                remap[v] = next;
                next += 1;
            }
        }
        let pick = |v: usize| keep[v];
        let faces = self
            .faces
            .iter()
            .filter(|f| f.iter().all(|&v| pick(v)))
            .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
            .collect();
        fn select<T: Clone>(src: &[T], keep: &[bool]) -> Vec<T> {
            src.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(x, _)| x.clone())
                .collect()
        }
        TriMesh {
            vertices: select(&self.vertices, keep),
            faces,
            normals: if self.normals.is_empty() {
                Vec::new()
            } else {
                select(&self.normals, keep)
            },
            labels: self.labels.as_ref().map(|l| select(l, keep)),
            embeddings: self.embeddings.as_ref().map(|e| select(e, keep)),
            vertex_keys: self.vertex_keys.as_ref().map(|k| select(k, keep)),
        }
    }
}

/// Plane `normal · p = offset` with a unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    /// Builds a plane, normalizing the normal. Fails on a zero normal.
    pub fn new(normal: Vec3, offset: f64) -> Result<Self> {
        let len = normal.norm();
        if !(len > 1e-12) || !offset.is_finite() {
            return Err(Error::Degenerate(format!(
                "plane normal {normal:?} / offset {offset}"
            )));
        }
        Ok(Self {
            normal: normal / len,
            offset: offset / len,
        })
    }

    pub fn from_point_normal(point: &Vec3, normal: &Vec3) -> Result<Self> {
        let n = normal.try_normalize(1e-12).ok_or_else(|| {
            Error::Degenerate(format!("plane normal {normal:?} has zero length"))
        })?;
        Ok(Self {
            normal: n,
            offset: n.dot(point),
        })
    }

    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.offset
    }

    pub fn project(&self, p: &Vec3) -> Vec3 {
        p - self.normal * self.signed_distance(p)
    }

    pub fn flipped(&self) -> Self {
        Self {
            normal: -self.normal,
            offset: -self.offset,
        }
    }
}

/// Pinhole intrinsics in pixels. Pixel `(u, v)` is column `u`, row `v`, and
/// pixel centers sit at integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        let k = Self { fx, fy, cx, cy };
        k.validate()?;
        Ok(k)
    }

    /// Intrinsics with a horizontal field of view (radians) and the principal
    /// point at the image center.
    pub fn from_fov(width: usize, height: usize, hfov: f64) -> Self {
        let fx = (width as f64 / 2.0) / (hfov / 2.0).tan();
        Self {
            fx,
            fy: fx,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
        }
    }

    pub fn from_matrix(k: &Matrix3<f64>) -> Result<Self> {
        let tol = 1e-9;
        if k[(0, 1)].abs() > tol
            || k[(1, 0)].abs() > tol
            || k[(2, 0)].abs() > tol
            || k[(2, 1)].abs() > tol
            || (k[(2, 2)] - 1.0).abs() > tol
        {
            return Err(Error::invalid(format!(
                "intrinsics must be a skew-free pinhole matrix, got {k:?}"
            )));
        }
        Self::new(k[(0, 0)], k[(1, 1)], k[(0, 2)], k[(1, 2)])
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.fx.is_finite()
            && self.fy.is_finite()
            && self.cx.is_finite()
            && self.cy.is_finite()
            && self.fx > 0.0
            && self.fy > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad intrinsics {self:?}")))
        }
    }

    /// Camera-frame point at pixel `(u, v)` with depth `z`.
    pub fn backproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }

    /// Pixel coordinates of a camera-frame point, or `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        (p.z > 0.0).then(|| {
            (
                self.fx * p.x / p.z + self.cx,
                self.fy * p.y / p.z + self.cy,
            )
        })
    }
}

/// Intrinsics plus a rigid camera-to-world transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    pub intrinsics: Intrinsics,
    pub camera_to_world: Isometry3<f64>,
}

impl CameraPose {
    pub fn new(intrinsics: Intrinsics, camera_to_world: Isometry3<f64>) -> Self {
        Self {
            intrinsics,
            camera_to_world,
        }
    }

    /// Validates that the upper-left block of `m` is a proper rotation and
    /// the last row is `[0 0 0 1]`.
    pub fn from_matrix(intrinsics: Intrinsics, m: &Matrix4<f64>) -> Result<Self> {
        intrinsics.validate()?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("pose contains non-finite values"));
        }
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        if ortho > 1e-6 || (r.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!(
                "pose rotation is not orthonormal with det +1 (error {ortho:.3e})"
            )));
        }
        let last = m.fixed_view::<1, 4>(3, 0);
        if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-6 {
            return Err(Error::invalid("pose last row must be [0 0 0 1]"));
        }
        let rotation =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        let translation = Translation3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
        Ok(Self::new(intrinsics, Isometry3::from_parts(translation, rotation)))
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        self.camera_to_world.to_homogeneous()
    }

    /// Pose at `eye` looking at `target`; the camera's +y axis points as close
    /// to `down` as possible (image rows grow downward).
    pub fn look_at(intrinsics: Intrinsics, eye: Vec3, target: Vec3, down: Vec3) -> Result<Self> {
        let z = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Degenerate("look_at target equals eye".into()))?;
        let x = down
            .cross(&z)
            .try_normalize(1e-9)
            .ok_or_else(|| Error::Degenerate("look_at direction parallel to down".into()))?;
        let y = z.cross(&x);
        let r = Matrix3::from_columns(&[x, y, z]);
        let rotation =
            UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(r));
        Ok(Self::new(
            intrinsics,
            Isometry3::from_parts(Translation3::from(eye), rotation),
        ))
    }

    pub fn center(&self) -> Vec3 {
        self.camera_to_world.translation.vector
    }

    pub fn to_world(&self, p_cam: &Vec3) -> Vec3 {
        self.camera_to_world.transform_point(&Point3::from(*p_cam)).coords
    }

    pub fn to_camera(&self, p_world: &Vec3) -> Vec3 {
        self.camera_to_world
            .inverse_transform_point(&Point3::from(*p_world))
            .coords
    }

    pub fn rotate_to_world(&self, v_cam: &Vec3) -> Vec3 {
        self.camera_to_world.rotation * v_cam
    }

    /// Pixel coordinates and camera depth of a world point.
    pub fn project(&self, p_world: &Vec3) -> Option<(f64, f64, f64)> {
        let pc = self.to_camera(p_world);
        self.intrinsics.project(&pc).map(|(u, v)| (u, v, pc.z))
    }
}

/// Dense row-major image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> Image<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Image<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::LengthMismatch(data.len(), width * height));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

pub type DepthImage = Image<f32>;

/// Unordered points with optional per-point plane labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<i32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Self {
        Self {
            points,
            labels: None,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().any(|p| !p.iter().all(|x| x.is_finite())) {
            return Err(Error::invalid("point cloud has non-finite coordinates"));
        }
        if let Some(l) = &self.labels {
            if l.len() != self.points.len() {
                return Err(Error::LengthMismatch(l.len(), self.points.len()));
            }
        }
        Ok(())
    }

    /// Points carrying `label`.
    pub fn with_label(&self, label: i32) -> Vec<Vec3> {
        match &self.labels {
            None => Vec::new(),
            Some(l) => self
                .points
                .iter()
                .zip(l)
                .filter(|(_, &x)| x == label)
                .map(|(p, _)| *p)
                .collect(),
        }
    }

    pub fn select(&self, keep: &[bool]) -> PointCloud {
        let points = self
            .points
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(p, _)| *p)
            .collect();
        let labels = self.labels.as_ref().map(|l| {
            l.iter()
                .zip(keep)
                .filter(|(_, &k)| k)
                .map(|(x, _)| *x)
                .collect()
        });
        PointCloud { points, labels }
    }
}

/// World-frame points for every valid (positive, finite) depth pixel.
pub fn unproject(depth: &DepthImage, pose: &CameraPose) -> PointCloud {
    let k = &pose.intrinsics;
    let mut points = Vec::new();
    for v in 0..depth.height {
        for u in 0..depth.width {
            let d = *depth.get(u, v) as f64;
            if d > 0.0 && d.is_finite() {
                points.push(pose.to_world(&k.backproject(u as f64, v as f64, d)));
            }
        }
    }
    PointCloud::new(points)
}
