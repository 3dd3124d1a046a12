use super::mlp::{SceneEmbeddingMlp, EMBEDDING_DIM};
use super::DistillConfig;
use crate::Vec3;

/// Two samples from the same keyframe: world points, pixel embeddings and
/// unit normals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainingPair {
    pub p_i: Vec3,
    pub p_j: Vec3,
    pub x_i: Vec3,
    pub x_j: Vec3,
    pub n_i: Vec3,
    pub n_j: Vec3,
}

/// Which side of the push-pull objective a pair falls on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// Pixel embeddings and normals agree: embeddings are pulled together.
    Pull,
    /// Otherwise: embeddings are pushed at least the margin apart.
    Push,
}

pub fn select_branch(x_i: &Vec3, x_j: &Vec3, n_i: &Vec3, n_j: &Vec3, cfg: &DistillConfig) -> Branch {
    if (x_i - x_j).norm() < cfg.t_e && n_i.dot(n_j) > cfg.t_n {
        Branch::Pull
    } else {
        Branch::Push
    }
}

impl TrainingPair {
    pub fn branch(&self, cfg: &DistillConfig) -> Branch {
        select_branch(&self.x_i, &self.x_j, &self.n_i, &self.n_j, cfg)
    }
}

/// Loss of one pair given its output embeddings, and its derivative with
/// respect to `f_i` (the derivative w.r.t. `f_j` is the negation).
pub(crate) fn branch_loss(branch: Branch, f_i: &Vec3, f_j: &Vec3, margin: f64) -> (f64, Vec3) {
    let diff = f_i - f_j;
    let dist = diff.norm();
    let unit = if dist > 0.0 { diff / dist } else { Vec3::zeros() };
    match branch {
        Branch::Pull => (dist, unit),
        Branch::Push if dist < margin => (margin - dist, -unit),
        Branch::Push => (0.0, Vec3::zeros()),
    }
}

pub fn pair_loss(pair: &TrainingPair, mlp: &SceneEmbeddingMlp, cfg: &DistillConfig) -> f64 {
    let f = mlp.forward_batch(&[pair.p_i, pair.p_j]);
    branch_loss(pair.branch(cfg), &f[0], &f[1], cfg.t_p).0
}

/// Points with index pairs into them; lets samples shared by several pairs
/// go through the network once.
#[derive(Clone, Debug, Default)]
pub(crate) struct PairBatch {
    pub points: Vec<Vec3>,
    pub pairs: Vec<(usize, usize, Branch)>,
}

/// Summed loss and its parameter gradient over a batch.
pub(crate) fn batch_objective(mlp: &SceneEmbeddingMlp, batch: &PairBatch, margin: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; mlp.param_count()];
    if batch.pairs.is_empty() {
        return (0.0, grad);
    }
    let cache = mlp.forward_cached(&batch.points);
    let out = &cache.output;
    let emb = |k: usize| Vec3::new(out[3 * k], out[3 * k + 1], out[3 * k + 2]);
    let mut dout = vec![0.0; out.len()];
    let mut total = 0.0;
    for &(i, j, branch) in &batch.pairs {
        let (loss, g) = branch_loss(branch, &emb(i), &emb(j), margin);
        total += loss;
        for c in 0..EMBEDDING_DIM {
            dout[3 * i + c] += g[c];
            dout[3 * j + c] -= g[c];
        }
    }
    mlp.backward(&cache, &dout, &mut grad);
    (total, grad)
}

/// Gradient of the summed pair loss with respect to every parameter.
pub fn loss_gradient(pairs: &[TrainingPair], mlp: &SceneEmbeddingMlp, cfg: &DistillConfig) -> Vec<f64> {
    let mut batch = PairBatch::default();
    for (k, p) in pairs.iter().enumerate() {
        batch.points.push(p.p_i);
        batch.points.push(p.p_j);
        batch.pairs.push((2 * k, 2 * k + 1, p.branch(cfg)));
    }
    batch_objective(mlp, &batch, cfg.t_p).1
}
