#![no_main]

use libfuzzer_sys::fuzz_target;
use planefield::embedding::{decode_checkpoint, SceneBounds, SceneEmbeddingMlp};
use planefield::Vec3;

fuzz_target!(|data: &[u8]| {
    let Ok(params) = decode_checkpoint(data) else { return };
    assert!(params.iter().all(|x| x.is_finite()));
    let bounds = SceneBounds::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap();
    if let Ok(mlp) = SceneEmbeddingMlp::from_checkpoint_bytes(data, bounds) {
        assert_eq!(mlp.to_checkpoint_bytes(), data);
    }
});
