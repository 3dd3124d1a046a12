use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::geometry::{CameraPose, Intrinsics, Plane};
use crate::{derive_seed, Error, Result, Vec3};

/// Axis-aligned rectangle in a plane's `(a, b)` coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl Rect {
    pub fn new(a: (f64, f64), b: (f64, f64)) -> Self {
        Self { a, b }
    }

    pub fn contains(&self, a: f64, b: f64) -> bool {
        a >= self.a.0 && a <= self.a.1 && b >= self.b.0 && b <= self.b.1
    }

    fn contains_strict(&self, a: f64, b: f64) -> bool {
        a > self.a.0 && a < self.a.1 && b > self.b.0 && b < self.b.1
    }
}

/// A ground-truth plane instance: a one-sided plane (visible from the side
/// its normal points to) restricted to a union of rectangles.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneInstance {
    pub id: i32,
    pub plane: Plane,
    /// Point of the plane with `a = b = 0`.
    pub origin: Vec3,
    pub a_axis: Vec3,
    pub b_axis: Vec3,
    pub rects: Vec<Rect>,
    /// Host instance when this one is a coplanar overlay drawn on top of it.
    pub overlay_of: Option<i32>,
}

impl SceneInstance {
    /// Instance on the plane `x[axis] = coord`, facing `+axis` when
    /// `facing_positive`. In-plane coordinates follow the remaining axes in
    /// cyclic-free order (x: y,z; y: x,z; z: x,y).
    pub fn axis_aligned(id: i32, axis: usize, coord: f64, facing_positive: bool, rects: Vec<Rect>) -> Self {
        let mut normal = Vec3::zeros();
        normal[axis] = if facing_positive { 1.0 } else { -1.0 };
        let (ia, ib) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        let mut origin = Vec3::zeros();
        origin[axis] = coord;
        let mut a_axis = Vec3::zeros();
        a_axis[ia] = 1.0;
        let mut b_axis = Vec3::zeros();
        b_axis[ib] = 1.0;
        Self {
            id,
            plane: Plane::from_point_normal(&origin, &normal).expect("axis normal is unit"),
            origin,
            a_axis,
            b_axis,
            rects,
            overlay_of: None,
        }
    }

    pub fn coords(&self, p: &Vec3) -> (f64, f64) {
        let q = p - self.origin;
        (q.dot(&self.a_axis), q.dot(&self.b_axis))
    }

    pub fn point(&self, a: f64, b: f64) -> Vec3 {
        self.origin + self.a_axis * a + self.b_axis * b
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        let (a, b) = self.coords(p);
        self.rects.iter().any(|r| r.contains(a, b))
    }

    pub fn area(&self) -> f64 {
        self.rects.iter().map(|r| (r.a.1 - r.a.0) * (r.b.1 - r.b.0)).sum()
    }
}

/// Non-planar object rendered with a low planar probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClutterSphere {
    pub center: Vec3,
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseModel {
    /// Standard deviation of additive depth noise (m).
    pub depth_sigma: f64,
    /// Standard deviation of per-pixel embedding noise.
    pub embedding_sigma: f64,
    /// Rotate all pixel embeddings of a frame by a random rotation.
    pub rotate_embeddings: bool,
    /// Planar probability assigned to clutter pixels.
    pub clutter_prob: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            depth_sigma: 0.01,
            embedding_sigma: 0.05,
            rotate_embeddings: true,
            clutter_prob: 0.1,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            depth_sigma: 0.0,
            embedding_sigma: 0.0,
            rotate_embeddings: false,
            clutter_prob: 0.1,
        }
    }
}

/// Radius of the sphere anchor embeddings are drawn on.
pub const ANCHOR_RADIUS: f64 = 1.5;
/// Minimum distance between two anchors.
pub const ANCHOR_SEPARATION: f64 = 1.0;

pub const DEFAULT_WIDTH: usize = 128;
pub const DEFAULT_HEIGHT: usize = 96;
/// Horizontal field of view of the default camera (radians).
pub const DEFAULT_HFOV: f64 = 1.4;

/// Planar scene with clutter, a camera trajectory and a noise model.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    /// Instances with ids `0..n` in order; overlays come after their hosts.
    pub instances: Vec<SceneInstance>,
    pub clutter: Vec<ClutterSphere>,
    /// Pixel-embedding anchor per instance, followed by one for clutter.
    pub anchors: Vec<Vec3>,
    pub width: usize,
    pub height: usize,
    pub intrinsics: Intrinsics,
    pub trajectory: Vec<CameraPose>,
    pub noise: NoiseModel,
    pub seed: u64,
}

/// Draws `n` points on the anchor sphere with pairwise distances above
/// `ANCHOR_SEPARATION` by rejection sampling.
pub fn draw_anchors(n: usize, seed: u64) -> Result<Vec<Vec3>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _restart in 0..200 {
        let mut anchors: Vec<Vec3> = Vec::with_capacity(n);
        let mut attempts = 0;
        while anchors.len() < n && attempts < 20_000 {
            attempts += 1;
            let g = Vec3::from_fn(|_, _| StandardNormal.sample(&mut rng));
            let Some(dir) = g.try_normalize(1e-9) else {
                continue;
            };
            let p = dir * ANCHOR_RADIUS;
            if anchors.iter().all(|q| (p - q).norm() > ANCHOR_SEPARATION) {
                anchors.push(p);
            }
        }
        if anchors.len() == n {
            return Ok(anchors);
        }
    }
    Err(Error::invalid(format!("cannot place {n} separated anchor embeddings")))
}

impl SyntheticScene {
    /// Scene over the given instances and clutter with anchors drawn from
    /// `seed`, default camera and noise, and an empty trajectory.
    pub fn new(instances: Vec<SceneInstance>, clutter: Vec<ClutterSphere>, seed: u64) -> Result<Self> {
        for (i, inst) in instances.iter().enumerate() {
            if inst.id != i as i32 {
                return Err(Error::invalid("instance ids must be 0..n in order"));
            }
            if inst.rects.is_empty() || inst.rects.iter().any(|r| !(r.a.1 > r.a.0 && r.b.1 > r.b.0)) {
                return Err(Error::invalid(format!("instance {i} has an empty extent")));
            }
            if let Some(host) = inst.overlay_of {
                if host < 0 || host >= inst.id {
                    return Err(Error::invalid("overlays must follow their host instance"));
                }
            }
        }
        let anchors = draw_anchors(instances.len() + 1, derive_seed(seed, 0xA5C4))?;
        Ok(Self {
            instances,
            clutter,
            anchors,
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            intrinsics: Intrinsics::from_fov(DEFAULT_WIDTH, DEFAULT_HEIGHT, DEFAULT_HFOV),
            trajectory: Vec::new(),
            noise: NoiseModel::default(),
            seed,
        })
    }

    pub fn with_resolution(mut self, width: usize, height: usize, hfov: f64) -> Self {
        self.width = width;
        self.height = height;
        self.intrinsics = Intrinsics::from_fov(width, height, hfov);
        for pose in &mut self.trajectory {
            pose.intrinsics = self.intrinsics;
        }
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn num_instances(&self) -> usize {
        self.instances.len()
    }

    pub fn clutter_anchor(&self) -> Vec3 {
        self.anchors[self.instances.len()]
    }

    /// Pose at `eye` looking toward `target` with image rows pointing down
    /// the world z axis.
    pub fn camera(&self, eye: Vec3, target: Vec3) -> Result<CameraPose> {
        CameraPose::look_at(self.intrinsics, eye, target, -Vec3::z())
    }

    /// Replaces the trajectory by `frames` views from an ellipse of radii
    /// `radii` around `center`, each looking back across the room at a
    /// point above `center`, alternately low and high. Successive views
    /// are a golden angle apart, so any short run of frames covers the room.
    pub fn look_inward(mut self, center: Vec3, radii: (f64, f64), frames: usize) -> Result<Self> {
        let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
        self.trajectory = (0..frames)
            .map(|i| {
                let yaw = golden * i as f64;
                let lift = [0.2, -0.3, 0.4, 0.0][i % 4];
                let eye = center + Vec3::new(radii.0 * yaw.cos(), radii.1 * yaw.sin(), lift);
                let target = Vec3::new(center.x, center.y, [0.5, 2.0, 0.9, 1.6][i % 4]);
                self.camera(eye, target)
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Replaces the trajectory by `frames` views from around `eye` sweeping a
    /// full turn of yaw while alternating pitch so floor and ceiling are seen.
    pub fn orbit(mut self, eye: Vec3, wobble: f64, frames: usize) -> Result<Self> {
        self.trajectory = (0..frames)
            .map(|i| {
                let yaw = std::f64::consts::TAU * i as f64 / frames as f64;
                let pitch: f64 = [-0.45, 0.1, 0.45, -0.1][i % 4];
                let offset = Vec3::new(yaw.cos(), yaw.sin(), 0.0) * wobble;
                let dir = Vec3::new(yaw.cos() * pitch.cos(), yaw.sin() * pitch.cos(), pitch.sin());
                let from = eye - offset;
                self.camera(from, from + dir)
            })
            .collect::<Result<_>>()?;
        Ok(self)
    }

    /// Axis-aligned bounds of all instances.
    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for inst in &self.instances {
            for r in &inst.rects {
                for (a, b) in [(r.a.0, r.b.0), (r.a.1, r.b.1)] {
                    let p = inst.point(a, b);
                    lo = lo.inf(&p);
                    hi = hi.sup(&p);
                }
            }
        }
        (lo, hi)
    }

    /// Whether `(a, b)` on `host` is covered by one of its overlays.
    pub(crate) fn covered_by_overlay(&self, host: i32, a: f64, b: f64) -> bool {
        self.instances
            .iter()
            .filter(|o| o.overlay_of == Some(host))
            .any(|o| {
                let p = self.instances[host as usize].point(a, b);
                let (oa, ob) = o.coords(&p);
                o.rects.iter().any(|r| r.contains_strict(oa, ob))
            })
    }
}

/// Room wall selector for overlays.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Wall {
    Floor,
    Ceiling,
    XMin,
    XMax,
    YMin,
    YMax,
}

impl Wall {
    pub const ALL: [Wall; 6] = [Wall::Floor, Wall::Ceiling, Wall::XMin, Wall::XMax, Wall::YMin, Wall::YMax];

    fn index(self) -> usize {
        Self::ALL.iter().position(|&w| w == self).unwrap()
    }
}

/// Coplanar sub-region of a room wall (a picture, a door, a rug), given by
/// its center and size in the wall's in-plane coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Overlay {
    pub wall: Wall,
    pub center: (f64, f64),
    pub size: (f64, f64),
}

/// Box room `[0, extent]` with z up: floor, ceiling and four walls (ids
/// 0..6 in [`Wall::ALL`] order) facing inward, then one instance per
/// overlay. The trajectory is empty; see [`SyntheticScene::orbit`].
pub fn make_box_room(extent: Vec3, overlays: &[Overlay], seed: u64) -> Result<SyntheticScene> {
    if extent.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("room extent {extent:?} must be positive")));
    }
    let (ex, ey, ez) = (extent.x, extent.y, extent.z);
    let mut instances = vec![
        SceneInstance::axis_aligned(0, 2, 0.0, true, vec![Rect::new((0.0, ex), (0.0, ey))]),
        SceneInstance::axis_aligned(1, 2, ez, false, vec![Rect::new((0.0, ex), (0.0, ey))]),
        SceneInstance::axis_aligned(2, 0, 0.0, true, vec![Rect::new((0.0, ey), (0.0, ez))]),
        SceneInstance::axis_aligned(3, 0, ex, false, vec![Rect::new((0.0, ey), (0.0, ez))]),
        SceneInstance::axis_aligned(4, 1, 0.0, true, vec![Rect::new((0.0, ex), (0.0, ez))]),
        SceneInstance::axis_aligned(5, 1, ey, false, vec![Rect::new((0.0, ex), (0.0, ez))]),
    ];
    for ov in overlays {
        let host = &instances[ov.wall.index()];
        let (ca, cb) = ov.center;
        let (w, h) = ov.size;
        let rect = Rect::new((ca - w / 2.0, ca + w / 2.0), (cb - h / 2.0, cb + h / 2.0));
        let bounds = host.rects[0];
        if !(w > 0.0 && h > 0.0)
            || rect.a.0 < bounds.a.0
            || rect.a.1 > bounds.a.1
            || rect.b.0 < bounds.b.0
            || rect.b.1 > bounds.b.1
        {
            return Err(Error::invalid(format!("overlay {ov:?} does not fit on its wall")));
        }
        let mut inst = host.clone();
        inst.id = instances.len() as i32;
        inst.rects = vec![rect];
        inst.overlay_of = Some(host.id);
        instances.push(inst);
    }
    SyntheticScene::new(instances, Vec::new(), seed)
}

/// Named synthetic scenes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Empty box room with one clutter ball, camera looking in from the walls.
    Box6,
    /// Box room with a large picture on one wall, camera scanning that wall.
    PictureWall,
    /// Two rooms joined by a doorway; the camera starts in the first and
    /// moves into the second.
    TwoRooms,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "box6" => Ok(Preset::Box6),
            "picture-wall" => Ok(Preset::PictureWall),
            "two-rooms" => Ok(Preset::TwoRooms),
            other => Err(Error::invalid(format!(
                "unknown preset {other:?} (expected box6, picture-wall or two-rooms)"
            ))),
        }
    }
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Box6 => "box6",
            Preset::PictureWall => "picture-wall",
            Preset::TwoRooms => "two-rooms",
        }
    }

    pub fn default_frames(self) -> usize {
        match self {
            Preset::Box6 => 16,
            Preset::PictureWall => 12,
            Preset::TwoRooms => 24,
        }
    }

    /// Builds the preset with its default number of frames.
    pub fn build(self, seed: u64) -> Result<SyntheticScene> {
        self.build_with_frames(seed, self.default_frames())
    }

    pub fn build_with_frames(self, seed: u64, frames: usize) -> Result<SyntheticScene> {
        match self {
            Preset::Box6 => box6(seed, frames),
            Preset::PictureWall => picture_wall(seed, frames),
            Preset::TwoRooms => two_rooms(seed, frames),
        }
    }
}

pub const ROOM_EXTENT: [f64; 3] = [4.0, 3.5, 2.6];

fn box6(seed: u64, frames: usize) -> Result<SyntheticScene> {
    let extent = Vec3::from(ROOM_EXTENT);
    let mut scene = make_box_room(extent, &[], seed)?;
    scene.clutter.push(ClutterSphere {
        center: Vec3::new(0.7, 0.7, 0.35),
        radius: 0.35,
    });
    scene.look_inward(Vec3::new(2.0, 1.75, 1.3), (1.5, 1.25), frames)
}

fn picture_wall(seed: u64, frames: usize) -> Result<SyntheticScene> {
    let extent = Vec3::from(ROOM_EXTENT);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x91C7));
    let center = (
        extent.y / 2.0 + rng.random_range(-0.25..0.25),
        1.35 + rng.random_range(-0.1..0.1),
    );
    let picture = Overlay {
        wall: Wall::XMax,
        center,
        size: (1.6, 1.1),
    };
    let mut scene = make_box_room(extent, &[picture], seed)?;
    // lateral scan of the picture wall from the middle of the room
    let wall_x = extent.x;
    scene.trajectory = (0..frames)
        .map(|i| {
            let s = if frames > 1 { i as f64 / (frames - 1) as f64 } else { 0.5 };
            let eye = Vec3::new(1.3 + 0.3 * (s * 5.0).sin(), 0.9 + 1.7 * s, 1.25 + 0.2 * (s * 7.0).cos());
            let target = Vec3::new(
                wall_x,
                center.0 + 0.9 * (s - 0.5) * [1.0, -1.0][i % 2],
                center.1 + [-0.6, 0.2, 0.6, -0.2][i % 4],
            );
            scene.camera(eye, target)
        })
        .collect::<Result<_>>()?;
    Ok(scene)
}

/// Room A spans `x ∈ [0, 3.85]`, room B `x ∈ [4.15, 8]`, joined by a door in
/// the 0.3 m divider at `y ∈ [1.25, 2.25]`, `z < 2`.
fn two_rooms(seed: u64, frames: usize) -> Result<SyntheticScene> {
    let (ey, ez) = (3.5, 2.6);
    let (xa, xb, xe) = (3.85, 4.15, 8.0);
    let (d0, d1, dh) = (1.25, 2.25, 2.0);
    let divider = vec![
        Rect::new((0.0, d0), (0.0, ez)),
        Rect::new((d1, ey), (0.0, ez)),
        Rect::new((d0, d1), (dh, ez)),
    ];
    let instances = vec![
        SceneInstance::axis_aligned(
            0,
            2,
            0.0,
            true,
            vec![
                Rect::new((0.0, xa), (0.0, ey)),
                Rect::new((xb, xe), (0.0, ey)),
                Rect::new((xa, xb), (d0, d1)),
            ],
        ),
        SceneInstance::axis_aligned(1, 2, ez, false, vec![Rect::new((0.0, xa), (0.0, ey))]),
        SceneInstance::axis_aligned(2, 0, 0.0, true, vec![Rect::new((0.0, ey), (0.0, ez))]),
        SceneInstance::axis_aligned(3, 1, 0.0, true, vec![Rect::new((0.0, xa), (0.0, ez))]),
        SceneInstance::axis_aligned(4, 1, ey, false, vec![Rect::new((0.0, xa), (0.0, ez))]),
        SceneInstance::axis_aligned(5, 0, xa, false, divider.clone()),
        SceneInstance::axis_aligned(6, 2, ez, false, vec![Rect::new((xb, xe), (0.0, ey))]),
        SceneInstance::axis_aligned(7, 0, xe, false, vec![Rect::new((0.0, ey), (0.0, ez))]),
        SceneInstance::axis_aligned(8, 1, 0.0, true, vec![Rect::new((xb, xe), (0.0, ez))]),
        SceneInstance::axis_aligned(9, 1, ey, false, vec![Rect::new((xb, xe), (0.0, ez))]),
        SceneInstance::axis_aligned(10, 0, xb, true, divider),
        SceneInstance::axis_aligned(11, 1, d0, true, vec![Rect::new((xa, xb), (0.0, dh))]),
        SceneInstance::axis_aligned(12, 1, d1, false, vec![Rect::new((xa, xb), (0.0, dh))]),
        SceneInstance::axis_aligned(13, 2, dh, false, vec![Rect::new((xa, xb), (d0, d1))]),
    ];
    let clutter = vec![ClutterSphere {
        center: Vec3::new(6.8, 2.7, 0.4),
        radius: 0.4,
    }];
    let mut scene = SyntheticScene::new(instances, clutter, seed)?;
    let first = frames / 2;
    let a = scene.clone().orbit(Vec3::new(1.9, 1.75, 1.3), 0.3, first.max(1))?;
    let b = scene.clone().orbit(Vec3::new(6.0, 1.75, 1.3), 0.3, (frames - first).max(1))?;
    scene.trajectory = a.trajectory.into_iter().take(first).collect();
    scene.trajectory.extend(b.trajectory.into_iter().take(frames - first));
    Ok(scene)
}
