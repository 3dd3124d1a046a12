//! Per-scene embedding field and its online push-pull training.

mod distill;
mod loss;
mod mlp;

pub use distill::{
    online_update, sample_keyframe, train_on_samples, DistillConfig, KeyframeSamples,
    OnlineDistiller, UpdateReport,
};
pub use loss::{loss_gradient, pair_loss, select_branch, Branch, TrainingPair};
pub use mlp::{
    decode_checkpoint, embed_mesh, AdamState, SceneBounds, SceneEmbeddingMlp, DEFAULT_OMEGA0,
    EMBEDDING_DIM, ENCODING_WIDTH, HIDDEN_LAYERS, HIDDEN_WIDTH,
};
