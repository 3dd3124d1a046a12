use nalgebra::{Matrix3, UnitQuaternion, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::scene::{NoiseModel, SyntheticScene};
use crate::geometry::{CameraPose, Image, TriMesh, UNLABELED};
use crate::tsdf::Keyframe;
use crate::{derive_seed, Error, Result, Vec3};

/// Ground-truth id of pixels that hit clutter.
pub const CLUTTER_ID: i32 = -2;

/// A rendered keyframe with its per-pixel ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub keyframe: Keyframe,
    /// Instance id per pixel, [`CLUTTER_ID`] on clutter and `-1` where the
    /// ray hits nothing.
    pub instance_ids: Image<i32>,
    /// Rotation applied to this frame's pixel embeddings.
    pub embedding_rotation: Matrix3<f64>,
}

/// What a camera ray hits first.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RayHit {
    /// Camera-frame depth of the hit.
    pub depth: f64,
    pub id: i32,
}

/// First front-facing surface along `center + t · dir` (t > 0), measured in
/// units of `dir`. Coplanar overlays win over their host.
pub fn cast_ray(scene: &SyntheticScene, center: &Vec3, dir: &Vec3) -> Option<RayHit> {
    let mut best: Option<RayHit> = None;
    for inst in &scene.instances {
        let denom = inst.plane.normal.dot(dir);
        if denom >= 0.0 {
            continue;
        }
        let t = (inst.plane.offset - inst.plane.normal.dot(center)) / denom;
        if !(t > 0.0) || !inst.contains(&(center + dir * t)) {
            continue;
        }
        let closer = match best {
            None => true,
            Some(b) => {
                let tie = (t - b.depth).abs() <= 1e-9 * (1.0 + t);
                if tie {
                    inst.overlay_of.is_some()
                } else {
                    t < b.depth
                }
            }
        };
        if closer {
            best = Some(RayHit { depth: t, id: inst.id });
        }
    }
    for ball in &scene.clutter {
        let oc = center - ball.center;
        let a = dir.norm_squared();
        let b = 2.0 * dir.dot(&oc);
        let c = oc.norm_squared() - ball.radius * ball.radius;
        let disc = b * b - 4.0 * a * c;
        if c <= 0.0 || disc < 0.0 {
            continue;
        }
        let t = (-b - disc.sqrt()) / (2.0 * a);
        if t > 0.0 && best.is_none_or(|h| t < h.depth) {
            best = Some(RayHit { depth: t, id: CLUTTER_ID });
        }
    }
    best
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
    loop {
        let q = Vector4::from_fn(|_, _| StandardNormal.sample(rng));
        if q.norm() > 1e-6 {
            let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::from_vector(q));
            return q.to_rotation_matrix().into_inner();
        }
    }
}

/// Ray-casts one keyframe of `width × height` pixels.
///
/// Depth is the camera-frame z of the first hit plus Gaussian noise (0 when
/// nothing is hit). Planar probability is 1 on instances and
/// `noise.clutter_prob` on clutter. Each pixel embedding is its instance's
/// anchor plus Gaussian noise, rotated by a per-frame random rotation when
/// `noise.rotate_embeddings` is set. All randomness derives from the scene
/// seed and `frame_id`.
pub fn render_keyframe(
    scene: &SyntheticScene,
    pose: &CameraPose,
    (width, height): (usize, usize),
    noise: &NoiseModel,
    frame_id: u32,
) -> Result<RenderedFrame> {
    if width < 3 || height < 3 {
        return Err(Error::ImageTooSmall { width, height });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.seed ^ 0x5EED_F4A3, frame_id as u64));
    // separate stream, so toggling rotation leaves the noise untouched
    let rotation = if noise.rotate_embeddings {
        let mut rot_rng = ChaCha8Rng::seed_from_u64(derive_seed(scene.seed ^ 0x0707_A7E5, frame_id as u64));
        random_rotation(&mut rot_rng)
    } else {
        Matrix3::identity()
    };
    let depth_noise = Normal::new(0.0, noise.depth_sigma.max(0.0))
        .map_err(|_| Error::invalid("bad depth noise"))?;
    let emb_noise = Normal::new(0.0, noise.embedding_sigma.max(0.0))
        .map_err(|_| Error::invalid("bad embedding noise"))?;
    let k = pose.intrinsics;
    let center = pose.center();
    let n = width * height;
    let mut depth = vec![0.0f32; n];
    let mut prob = vec![0.0f32; n];
    let mut emb = vec![[0.0f32; 3]; n];
    let mut ids = vec![UNLABELED; n];
    for v in 0..height {
        for u in 0..width {
            let i = v * width + u;
            let dir = pose.rotate_to_world(&k.backproject(u as f64, v as f64, 1.0));
            let Some(hit) = cast_ray(scene, &center, &dir) else {
                continue;
            };
            let (anchor, p) = if hit.id == CLUTTER_ID {
                (scene.clutter_anchor(), noise.clutter_prob)
            } else {
                (scene.anchors[hit.id as usize], 1.0)
            };
            let d = hit.depth
                + if noise.depth_sigma > 0.0 {
                    depth_noise.sample(&mut rng)
                } else {
                    0.0
                };
            let e = if noise.embedding_sigma > 0.0 {
                anchor + Vec3::from_fn(|_, _| emb_noise.sample(&mut rng))
            } else {
                anchor
            };
            let e = rotation * e;
            depth[i] = d.max(0.0) as f32;
            prob[i] = p as f32;
            emb[i] = [e.x as f32, e.y as f32, e.z as f32];
            ids[i] = hit.id;
        }
    }
    Ok(RenderedFrame {
        keyframe: Keyframe {
            depth: Image::from_vec(width, height, depth)?,
            planar_prob: Image::from_vec(width, height, prob)?,
            pixel_embedding: Image::from_vec(width, height, emb)?,
            pose: *pose,
            frame_id,
            timestamp: frame_id as f64,
        },
        instance_ids: Image::from_vec(width, height, ids)?,
        embedding_rotation: rotation,
    })
}

/// Renders every pose of the scene trajectory; frame ids are trajectory
/// indices.
pub fn render_sequence(scene: &SyntheticScene) -> Result<Vec<RenderedFrame>> {
    scene
        .trajectory
        .iter()
        .enumerate()
        .map(|(i, pose)| render_keyframe(scene, pose, (scene.width, scene.height), &scene.noise, i as u32))
        .collect()
}

/// Sorted grid coordinates covering `[lo, hi]` with steps of at most
/// `cell`, including every extra breakpoint inside the range.
fn breakpoints(lo: f64, hi: f64, cell: f64, extra: &[f64]) -> Vec<f64> {
    let steps = ((hi - lo) / cell).ceil().max(1.0) as usize;
    let mut xs: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    xs.extend(extra.iter().copied().filter(|&x| x > lo && x < hi));
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    xs
}

/// Triangulated instance extents with per-vertex instance labels and plane
/// normals. Grid cells are at most `cell` meters wide; areas covered by an
/// overlay belong only to the overlay. Each rectangle is a separate grid, so
/// vertices along rectangle seams are duplicated.
pub fn ground_truth_mesh(scene: &SyntheticScene, cell: f64) -> Result<TriMesh> {
    if !(cell > 0.0 && cell.is_finite()) {
        return Err(Error::invalid(format!("cell size {cell} must be positive")));
    }
    let mut mesh = TriMesh::default();
    let mut labels = Vec::new();
    for inst in &scene.instances {
        let overlays: Vec<_> = scene
            .instances
            .iter()
            .filter(|o| o.overlay_of == Some(inst.id))
            .flat_map(|o| {
                o.rects.iter().map(move |r| {
                    let a0 = inst.coords(&o.point(r.a.0, r.b.0));
                    let a1 = inst.coords(&o.point(r.a.1, r.b.1));
                    ([a0.0, a1.0], [a0.1, a1.1])
                })
            })
            .collect();
        let extra_a: Vec<f64> = overlays.iter().flat_map(|o| o.0).collect();
        let extra_b: Vec<f64> = overlays.iter().flat_map(|o| o.1).collect();
        for rect in &inst.rects {
            let xa = breakpoints(rect.a.0, rect.a.1, cell, &extra_a);
            let xb = breakpoints(rect.b.0, rect.b.1, cell, &extra_b);
            let (na, nb) = (xa.len(), xb.len());
            let mut used = vec![false; na * nb];
            let mut faces = Vec::new();
            for j in 0..nb - 1 {
                for i in 0..na - 1 {
                    let (ca, cb) = ((xa[i] + xa[i + 1]) / 2.0, (xb[j] + xb[j + 1]) / 2.0);
                    if scene.covered_by_overlay(inst.id, ca, cb) {
                        continue;
                    }
                    let idx = |i: usize, j: usize| j * na + i;
                    let quad = [idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)];
                    // wind so the face normal matches the plane normal
                    let flip = inst.a_axis.cross(&inst.b_axis).dot(&inst.plane.normal) < 0.0;
                    let (t0, t1) = if flip {
                        ([quad[0], quad[2], quad[1]], [quad[0], quad[3], quad[2]])
                    } else {
                        ([quad[0], quad[1], quad[2]], [quad[0], quad[2], quad[3]])
                    };
                    faces.push(t0);
                    faces.push(t1);
                    quad.iter().for_each(|&q| used[q] = true);
                }
            }
            let mut remap = vec![usize::MAX; na * nb];
            for j in 0..nb {
                for i in 0..na {
                    let g = j * na + i;
                    if used[g] {
                        remap[g] = mesh.vertices.len();
                        mesh.vertices.push(inst.point(xa[i], xb[j]));
                        mesh.normals.push(inst.plane.normal);
                        labels.push(inst.id);
                    }
                }
            }
            mesh.faces.extend(faces.iter().map(|f| f.map(|g| remap[g])));
        }
    }
    mesh.labels = Some(labels);
    Ok(mesh)
}
