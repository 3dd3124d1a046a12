//! End-to-end reconstruction: batch over a whole archive, or keyframe by
//! keyframe with plane tracking.

use std::collections::HashMap;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::embedding::{embed_mesh, OnlineDistiller, SceneBounds, SceneEmbeddingMlp};
use crate::geometry::TriMesh;
use crate::grouping::{group_planes, mean_shift_grouping, Grouping, PlaneTracker};
use crate::io::{format_labels, instances_json, save_ply, SceneReader};
use crate::planarize::planarize_mesh;
use crate::tsdf::{Keyframe, TsdfVolume};
use crate::{derive_seed, Error, Result, Vec3};

pub const MESH_FILE: &str = "mesh.ply";
pub const PLANAR_MESH_FILE: &str = "mesh_planar.ply";
pub const LABELS_FILE: &str = "labels.txt";
pub const INSTANCES_FILE: &str = "instances.json";
pub const TIMINGS_FILE: &str = "timings.jsonl";
pub const REPORT_FILE: &str = "report.json";

const MLP_STREAM: u64 = 1;
const SAMPLING_STREAM: u64 = 2;

/// Axis-aligned box around every valid depth sample of the frames.
pub fn observed_extent<'a>(frames: impl IntoIterator<Item = &'a Keyframe>) -> Result<(Vec3, Vec3)> {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for f in frames {
        let k = f.pose.intrinsics;
        for v in 0..f.height() {
            for u in 0..f.width() {
                if let Some(z) = f.depth_at(u, v) {
                    let p = f.pose.to_world(&k.backproject(u as f64, v as f64, z));
                    lo = lo.inf(&p);
                    hi = hi.sup(&p);
                }
            }
        }
    }
    if !lo.iter().all(|x| x.is_finite()) {
        return Err(Error::invalid("no frame has a valid depth sample"));
    }
    Ok((lo, hi))
}

/// Extent of an archive, decoding each frame once.
pub fn archive_extent(reader: &SceneReader) -> Result<(Vec3, Vec3)> {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut any = false;
    for frame in reader.frames() {
        if let Ok((a, b)) = observed_extent([&frame?]) {
            lo = lo.inf(&a);
            hi = hi.sup(&b);
            any = true;
        }
    }
    if !any {
        return Err(Error::invalid("no frame has a valid depth sample"));
    }
    Ok((lo, hi))
}

fn new_volume(extent: (Vec3, Vec3), cfg: &PipelineConfig) -> Result<TsdfVolume> {
    let pad = Vec3::repeat(cfg.truncation() + cfg.voxel_size);
    TsdfVolume::covering(extent.0 - pad, extent.1 + pad, cfg.voxel_size, cfg.truncation())
}

fn new_distiller(extent: (Vec3, Vec3), cfg: &PipelineConfig) -> Result<OnlineDistiller> {
    let bounds = SceneBounds::around([extent.0, extent.1], cfg.bounds_margin)?;
    let mlp = SceneEmbeddingMlp::new(bounds, derive_seed(cfg.seed, MLP_STREAM));
    OnlineDistiller::new(mlp, cfg.distill, derive_seed(cfg.seed, SAMPLING_STREAM))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

/// Wall time of each batch stage, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub fusion_ms: f64,
    pub mlp_ms: f64,
    pub extraction_ms: f64,
    pub embedding_ms: f64,
    pub grouping_ms: f64,
    pub planarize_ms: f64,
}

/// Result of a reconstruction.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// The extracted mesh with vertex embeddings (when used) and labels.
    pub mesh: TriMesh,
    pub grouping: Grouping,
    /// Labeled vertices projected onto their planes.
    pub planar_mesh: TriMesh,
    pub mlp: Option<SceneEmbeddingMlp>,
    pub timings: StageTimings,
}

impl Reconstruction {
    fn assemble(mesh: TriMesh, grouping: Grouping, mlp: Option<SceneEmbeddingMlp>, mut timings: StageTimings) -> Self {
        let t = Instant::now();
        let mut mesh = mesh;
        mesh.labels = Some(grouping.labels.clone());
        let mut planar_mesh = planarize_mesh(&mesh, &grouping.instances);
        planar_mesh.vertex_keys = None;
        timings.planarize_ms = ms(t.elapsed());
        Self {
            mesh,
            grouping,
            planar_mesh,
            mlp,
            timings,
        }
    }

    pub fn num_planes(&self) -> usize {
        self.grouping.instances.len()
    }

    /// Writes the labeled mesh, the planarized mesh, per-vertex labels of
    /// the labeled mesh and the instance list.
    pub fn write_outputs(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
        save_ply(&dir.join(MESH_FILE), &self.mesh)?;
        save_ply(&dir.join(PLANAR_MESH_FILE), &self.planar_mesh)?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::from(e).in_file(path))
        };
        write(LABELS_FILE, format_labels(&self.grouping.labels))?;
        write(
            INSTANCES_FILE,
            instances_json(self.mesh.num_vertices(), &self.grouping.instances)?,
        )
    }
}

fn group(mesh: &TriMesh, cfg: &PipelineConfig) -> Result<Grouping> {
    let mut gcfg = cfg.grouping;
    gcfg.rng_seed = cfg.seed;
    group_planes(mesh, cfg.grouping_method, &gcfg)
}

/// Batch reconstruction: fuse every frame and train the embedding network
/// on each in turn, then extract, embed, group and planarize.
pub fn reconstruct(frames: &[Keyframe], cfg: &PipelineConfig) -> Result<Reconstruction> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::invalid("no keyframes to reconstruct"));
    }
    let extent = observed_extent(frames)?;
    let mut volume = new_volume(extent, cfg)?;
    let mut distiller = if cfg.use_embeddings() {
        Some(new_distiller(extent, cfg)?)
    } else {
        None
    };
    let mut timings = StageTimings::default();
    for frame in frames {
        let t = Instant::now();
        volume.integrate(frame)?;
        timings.fusion_ms += ms(t.elapsed());
        if let Some(d) = distiller.as_mut() {
            let t = Instant::now();
            d.push_keyframe(frame)?;
            timings.mlp_ms += ms(t.elapsed());
        }
    }
    let t = Instant::now();
    let mut mesh = volume.extract_mesh(cfg.planar_threshold);
    timings.extraction_ms = ms(t.elapsed());
    let mlp = distiller.map(OnlineDistiller::into_mlp);
    if let Some(mlp) = &mlp {
        let t = Instant::now();
        mesh = embed_mesh(mlp, &mesh);
        timings.embedding_ms = ms(t.elapsed());
    }
    let t = Instant::now();
    let grouping = group(&mesh, cfg)?;
    timings.grouping_ms = ms(t.elapsed());
    Ok(Reconstruction::assemble(mesh, grouping, mlp, timings))
}

/// Reads an archive and reconstructs it.
pub fn reconstruct_archive(dir: &Path, cfg: &PipelineConfig) -> Result<Reconstruction> {
    let frames = crate::io::read_scene(dir)?;
    reconstruct(&frames, cfg)
}

/// Per-keyframe wall times of the online pipeline, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTiming {
    pub frame_id: u32,
    pub depth_ingest_ms: f64,
    /// Integration plus mesh re-extraction.
    pub fusion_ms: f64,
    /// Network update plus re-embedding of the mesh.
    pub mlp_ms: f64,
    /// Mean-shift grouping plus id tracking.
    pub clustering_ms: f64,
}

/// A tracked plane after one keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackedInstance {
    pub id: i32,
    pub vertex_count: usize,
}

/// What the online pipeline produced for one keyframe.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlineStep {
    pub frame_id: u32,
    pub num_vertices: usize,
    /// Planes in decreasing size order, with persistent ids.
    pub planes: Vec<TrackedInstance>,
    pub timing: FrameTiming,
}

impl OnlineStep {
    pub fn plane_ids(&self) -> Vec<i32> {
        self.planes.iter().map(|p| p.id).collect()
    }
}

/// Online reconstruction: every keyframe updates the volume, the mesh and
/// the embedding network, regroups with mean-shift and carries plane ids
/// over from the previous keyframe. The scene box is fixed up front.
#[derive(Debug)]
pub struct OnlineReconstructor {
    cfg: PipelineConfig,
    volume: TsdfVolume,
    distiller: OnlineDistiller,
    tracker: PlaneTracker,
    state: Option<(TriMesh, Grouping)>,
}

impl OnlineReconstructor {
    pub fn new(extent: (Vec3, Vec3), cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        if !cfg.use_embeddings() {
            return Err(Error::invalid("online mode groups by embedding and cannot run without embeddings"));
        }
        Ok(Self {
            cfg: cfg.clone(),
            volume: new_volume(extent, cfg)?,
            distiller: new_distiller(extent, cfg)?,
            tracker: PlaneTracker::new(),
            state: None,
        })
    }

    /// Processes the next keyframe. `depth_ingest` is the time it took to
    /// obtain the frame and is only logged.
    pub fn step(&mut self, frame: &Keyframe, depth_ingest: Duration) -> Result<OnlineStep> {
        let mut timing = FrameTiming {
            frame_id: frame.frame_id,
            depth_ingest_ms: ms(depth_ingest),
            ..Default::default()
        };

        let t = Instant::now();
        self.volume.integrate(frame)?;
        let mesh = self.volume.extract_mesh(self.cfg.planar_threshold);
        timing.fusion_ms = ms(t.elapsed());

        let t = Instant::now();
        self.distiller.push_keyframe(frame)?;
        let mesh = embed_mesh(&self.distiller.mlp, &mesh);
        timing.mlp_ms = ms(t.elapsed());

        let t = Instant::now();
        let mut gcfg = self.cfg.grouping;
        gcfg.rng_seed = self.cfg.seed;
        let grouping = mean_shift_grouping(&mesh, &gcfg)?;
        let grouping = self.track(&mesh, grouping);
        timing.clustering_ms = ms(t.elapsed());

        let step = OnlineStep {
            frame_id: frame.frame_id,
            num_vertices: mesh.num_vertices(),
            planes: grouping
                .instances
                .iter()
                .map(|i| TrackedInstance {
                    id: i.id,
                    vertex_count: i.vertex_count(),
                })
                .collect(),
            timing,
        };
        self.state = Some((mesh, grouping));
        Ok(step)
    }

    /// Replaces the per-keyframe labels `0..k` by persistent ids.
    fn track(&mut self, mesh: &TriMesh, mut grouping: Grouping) -> Grouping {
        let keys = mesh
            .vertex_keys
            .as_deref()
            .expect("extracted meshes carry vertex keys");
        let members: Vec<Vec<u64>> = grouping
            .instances
            .iter()
            .map(|inst| inst.vertex_ids.iter().map(|&v| keys[v]).collect())
            .collect();
        let ids = self.tracker.update(&members);
        let remap: HashMap<i32, i32> = grouping
            .instances
            .iter()
            .zip(&ids)
            .map(|(inst, &id)| (inst.id, id))
            .collect();
        for (inst, &id) in grouping.instances.iter_mut().zip(&ids) {
            inst.id = id;
        }
        for l in grouping.labels.iter_mut().filter(|l| **l >= 0) {
            *l = remap[l];
        }
        grouping
    }

    /// The state after the last keyframe, planarized.
    pub fn finish(self) -> Result<Reconstruction> {
        let Some((mesh, grouping)) = self.state else {
            return Err(Error::invalid("no keyframes were processed"));
        };
        Ok(Reconstruction::assemble(
            mesh,
            grouping,
            Some(self.distiller.into_mlp()),
            StageTimings::default(),
        ))
    }
}

/// Runs the online pipeline over an archive in file order, handing each
/// step to `on_step`.
pub fn run_online(
    reader: &SceneReader,
    cfg: &PipelineConfig,
    mut on_step: impl FnMut(&OnlineStep) -> Result<()>,
) -> Result<Reconstruction> {
    let extent = archive_extent(reader)?;
    let mut online = OnlineReconstructor::new(extent, cfg)?;
    for index in 0..reader.len() {
        let t = Instant::now();
        let frame = reader.frame(index)?;
        let step = online.step(&frame, t.elapsed())?;
        on_step(&step)?;
    }
    online.finish()
}
