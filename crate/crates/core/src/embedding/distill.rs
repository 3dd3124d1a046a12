use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::{batch_objective, select_branch, Branch, PairBatch};
use super::mlp::SceneEmbeddingMlp;
use crate::geometry::normals_from_depth_strided;
use crate::tsdf::Keyframe;
use crate::{derive_seed, Error, Result, Vec3};

/// Online distillation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistillConfig {
    /// Pixel embeddings closer than this may be pulled together.
    pub t_e: f64,
    /// Normals must have a dot product above this to be pulled together.
    pub t_n: f64,
    /// Push margin.
    pub t_p: f64,
    pub pixels_per_keyframe: usize,
    /// How many earlier keyframes are replayed with each new one.
    pub replay_window: usize,
    pub steps_per_keyframe: usize,
    pub learning_rate: f64,
    /// Half-width in pixels of the normal-estimation stencil.
    pub normal_stride: usize,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            t_e: 0.9,
            t_n: 0.8,
            t_p: 1.0,
            pixels_per_keyframe: 400,
            replay_window: 10,
            steps_per_keyframe: 10,
            learning_rate: 1e-3,
            normal_stride: 3,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_e > 0.0) {
            return Err(Error::invalid(format!("t_e must be positive, got {}", self.t_e)));
        }
        if !(self.t_n > 0.0 && self.t_n < 1.0) {
            return Err(Error::invalid(format!("t_n must lie in (0, 1), got {}", self.t_n)));
        }
        if !(self.t_p > 0.0) {
            return Err(Error::invalid(format!("t_p must be positive, got {}", self.t_p)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.normal_stride == 0 {
            return Err(Error::invalid("normal stride must be at least 1"));
        }
        Ok(())
    }
}

/// Pixels sampled from one keyframe, lifted to world space, and the pairs
/// formed among them.
#[derive(Clone, Debug, PartialEq)]
pub struct KeyframeSamples {
    pub frame_id: u32,
    pub points: Vec<Vec3>,
    pub pixel_embeddings: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    /// Index pairs into the sample arrays with their branch.
    pub pairs: Vec<(usize, usize, Branch)>,
}

/// Draws up to `pixels_per_keyframe` distinct pixels with valid depth and
/// normal, and pairs every sample with every other.
///
/// The draw depends only on `rng_seed` and the frame id. Returns `None` when
/// fewer than two usable pixels exist.
pub fn sample_keyframe(
    frame: &Keyframe,
    cfg: &DistillConfig,
    rng_seed: u64,
) -> Result<Option<KeyframeSamples>> {
    frame.validate()?;
    let k = frame.pose.intrinsics;
    let stride = cfg
        .normal_stride
        .min((frame.width().min(frame.height()).saturating_sub(1)) / 2)
        .max(1);
    let normals = normals_from_depth_strided(&frame.depth, &k, stride)?;
    let valid: Vec<usize> = (0..frame.depth.data.len())
        .filter(|&i| {
            let d = frame.depth.data[i];
            d > 0.0 && d.is_finite() && normals.data[i].is_some()
        })
        .collect();
    if valid.len() < 2 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, frame.frame_id as u64));
    let n = cfg.pixels_per_keyframe.min(valid.len());
    if n < 2 {
        return Ok(None);
    }
    let picks = rand::seq::index::sample(&mut rng, valid.len(), n);
    let w = frame.width();
    let mut samples = KeyframeSamples {
        frame_id: frame.frame_id,
        points: Vec::with_capacity(n),
        pixel_embeddings: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        pairs: Vec::with_capacity(n * (n - 1) / 2),
    };
    for pick in picks.iter() {
        let idx = valid[pick];
        let (u, v) = (idx % w, idx / w);
        let z = frame.depth.data[idx] as f64;
        let p_cam = k.backproject(u as f64, v as f64, z);
        samples.points.push(frame.pose.to_world(&p_cam));
        let n_cam = normals.data[idx].expect("filtered to valid normals");
        samples.normals.push(frame.pose.rotate_to_world(&n_cam));
        let x = frame.pixel_embedding.data[idx];
        samples
            .pixel_embeddings
            .push(Vec3::new(x[0] as f64, x[1] as f64, x[2] as f64));
    }
    for i in 0..n {
        for j in i + 1..n {
            let branch = select_branch(
                &samples.pixel_embeddings[i],
                &samples.pixel_embeddings[j],
                &samples.normals[i],
                &samples.normals[j],
                cfg,
            );
            samples.pairs.push((i, j, branch));
        }
    }
    Ok(Some(samples))
}

/// What one online update did.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    /// False when the new keyframe had too few usable pixels.
    pub applied: bool,
    pub keyframes_used: usize,
    /// Branch of every training pair, new keyframe first, then replayed
    /// keyframes from most to least recent.
    pub branches: Vec<Branch>,
    /// Mean pair loss before each optimizer step.
    pub step_losses: Vec<f64>,
}

impl UpdateReport {
    pub fn pull_count(&self) -> usize {
        self.branches.iter().filter(|b| **b == Branch::Pull).count()
    }
}

/// Runs the optimizer for `steps_per_keyframe` steps over the pairs of the
/// given sample sets, minimizing the mean pair loss.
pub fn train_on_samples(
    mlp: &mut SceneEmbeddingMlp,
    window: &[&KeyframeSamples],
    cfg: &DistillConfig,
) -> UpdateReport {
    let mut batch = PairBatch::default();
    let mut report = UpdateReport {
        applied: true,
        keyframes_used: window.len(),
        ..Default::default()
    };
    for s in window {
        let base = batch.points.len();
        batch.points.extend_from_slice(&s.points);
        for &(i, j, b) in &s.pairs {
            batch.pairs.push((base + i, base + j, b));
            report.branches.push(b);
        }
    }
    if batch.pairs.is_empty() {
        report.applied = false;
        return report;
    }
    let scale = 1.0 / batch.pairs.len() as f64;
    for _ in 0..cfg.steps_per_keyframe {
        let (loss, mut grad) = batch_objective(mlp, &batch, cfg.t_p);
        grad.iter_mut().for_each(|g| *g *= scale);
        report.step_losses.push(loss * scale);
        mlp.adam_step(&grad, cfg.learning_rate);
    }
    report
}

/// One online training round for a new keyframe: sample it, replay up to
/// `replay_window` of the most recent keyframes in `replay` (ordered oldest
/// first), and take `steps_per_keyframe` optimizer steps.
///
/// Leaves the network untouched when the new keyframe has fewer than two
/// usable pixels.
pub fn online_update(
    mlp: &mut SceneEmbeddingMlp,
    new_keyframe: &Keyframe,
    replay: &[Keyframe],
    cfg: &DistillConfig,
    rng_seed: u64,
) -> Result<UpdateReport> {
    cfg.validate()?;
    let Some(first) = sample_keyframe(new_keyframe, cfg, rng_seed)? else {
        return Ok(UpdateReport::default());
    };
    let mut window = vec![first];
    for frame in replay.iter().rev().take(cfg.replay_window) {
        if let Some(s) = sample_keyframe(frame, cfg, rng_seed)? {
            window.push(s);
        }
    }
    let refs: Vec<&KeyframeSamples> = window.iter().collect();
    Ok(train_on_samples(mlp, &refs, cfg))
}

/// Keeps the replay buffer for a stream of keyframes. Samples are drawn once
/// per keyframe and reused whenever that keyframe is replayed, which gives
/// the same result as calling [`online_update`] with the raw frames.
#[derive(Clone, Debug)]
pub struct OnlineDistiller {
    pub mlp: SceneEmbeddingMlp,
    cfg: DistillConfig,
    seed: u64,
    recent: VecDeque<KeyframeSamples>,
}

impl OnlineDistiller {
    pub fn new(mlp: SceneEmbeddingMlp, cfg: DistillConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            mlp,
            cfg,
            seed,
            recent: VecDeque::new(),
        })
    }

    pub fn config(&self) -> &DistillConfig {
        &self.cfg
    }

    pub fn push_keyframe(&mut self, frame: &Keyframe) -> Result<UpdateReport> {
        let Some(samples) = sample_keyframe(frame, &self.cfg, self.seed)? else {
            return Ok(UpdateReport::default());
        };
        let mut window = vec![&samples];
        window.extend(self.recent.iter().rev().take(self.cfg.replay_window));
        let report = train_on_samples(&mut self.mlp, &window, &self.cfg);
        self.recent.push_back(samples);
        while self.recent.len() > self.cfg.replay_window {
            self.recent.pop_front();
        }
        Ok(report)
    }

    pub fn into_mlp(self) -> SceneEmbeddingMlp {
        self.mlp
    }
}
