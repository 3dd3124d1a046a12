//! Pipeline configuration and its `key = value` file form.
//!
//! File keys are the command-line flag names without the leading dashes,
//! for example:
//!
//! ```toml
//! seed = 3
//! voxel-size = 0.04
//! grouping = "meanshift"
//! no-embeddings = false
//! t-e = 0.9
//! ```
//!
//! Layers are applied in order (defaults, file, flags), later ones winning.

use serde::{Deserialize, Serialize};

use crate::embedding::DistillConfig;
use crate::grouping::{GroupingConfig, GroupingMethod};
use crate::metrics::MetricConfig;
use crate::{Error, Result};

/// Everything the batch and online pipelines need.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub voxel_size: f64,
    /// Defaults to three voxels when unset.
    pub truncation: Option<f64>,
    pub planar_threshold: f64,
    pub grouping_method: GroupingMethod,
    pub grouping: GroupingConfig,
    pub distill: DistillConfig,
    /// Relative padding of the embedding network's input box around the
    /// observed scene.
    pub bounds_margin: f64,
    pub metrics: MetricConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            voxel_size: 0.04,
            truncation: None,
            planar_threshold: 0.25,
            grouping_method: GroupingMethod::Ransac,
            grouping: GroupingConfig::default(),
            distill: DistillConfig::default(),
            bounds_margin: 0.2,
            metrics: MetricConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn truncation(&self) -> f64 {
        self.truncation.unwrap_or(3.0 * self.voxel_size)
    }

    pub fn use_embeddings(&self) -> bool {
        self.grouping.use_embeddings
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::invalid(format!("voxel size must be positive, got {}", self.voxel_size)));
        }
        if !(self.truncation() >= 2.0 * self.voxel_size && self.truncation().is_finite()) {
            return Err(Error::invalid(format!(
                "truncation {} must be at least two voxels ({})",
                self.truncation(),
                2.0 * self.voxel_size
            )));
        }
        if !(0.0..=1.0).contains(&self.planar_threshold) {
            return Err(Error::invalid(format!(
                "planar threshold must lie in [0, 1], got {}",
                self.planar_threshold
            )));
        }
        if !(self.bounds_margin >= 0.0 && self.bounds_margin.is_finite()) {
            return Err(Error::invalid(format!("bounds margin must be non-negative, got {}", self.bounds_margin)));
        }
        if self.grouping_method == GroupingMethod::MeanShift && !self.use_embeddings() {
            return Err(Error::invalid("mean-shift grouping clusters embeddings and cannot run without them"));
        }
        self.grouping.validate()?;
        self.distill.validate()
    }
}

/// One configuration layer. Unset keys leave the layer below untouched.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ConfigLayer {
    pub seed: Option<u64>,
    pub voxel_size: Option<f64>,
    pub truncation: Option<f64>,
    pub planar_threshold: Option<f64>,
    pub grouping: Option<GroupingMethod>,
    pub no_embeddings: Option<bool>,
    pub t_e: Option<f64>,
    pub t_n: Option<f64>,
    pub t_p: Option<f64>,
    pub pixels_per_kf: Option<usize>,
    pub replay: Option<usize>,
    pub steps_per_kf: Option<usize>,
    pub lr: Option<f64>,
    pub normal_stride: Option<usize>,
    pub r_d: Option<f64>,
    pub r_e: Option<f64>,
    pub merge_embedding: Option<f64>,
    pub merge_normal_dot: Option<f64>,
    pub min_vertices: Option<usize>,
    pub max_iterations: Option<usize>,
    pub proposals_per_round: Option<usize>,
    pub bandwidth: Option<f64>,
    pub bounds_margin: Option<f64>,
    pub sample_points: Option<usize>,
    pub f1_threshold: Option<f64>,
    pub k_planes: Option<usize>,
    pub visibility_margin: Option<f64>,
}

/// Parses a configuration file. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ConfigLayer> {
    toml::from_str(text).map_err(|e| Error::parse(e.message().to_string()))
}

impl ConfigLayer {
    /// Stacks `top` over `self`.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        macro_rules! pick {
            ($($f:ident),*) => {
                ConfigLayer { $($f: top.$f.or(self.$f)),* }
            };
        }
        pick!(
            seed, voxel_size, truncation, planar_threshold, grouping, no_embeddings, t_e, t_n, t_p,
            pixels_per_kf, replay, steps_per_kf, lr, normal_stride, r_d, r_e, merge_embedding,
            merge_normal_dot, min_vertices, max_iterations, proposals_per_round, bandwidth,
            bounds_margin, sample_points, f1_threshold, k_planes, visibility_margin
        )
    }

    pub fn apply(&self, cfg: &mut PipelineConfig) {
        fn set<T: Copy>(dst: &mut T, v: Option<T>) {
            if let Some(v) = v {
                *dst = v;
            }
        }
        set(&mut cfg.seed, self.seed);
        set(&mut cfg.voxel_size, self.voxel_size);
        if self.truncation.is_some() {
            cfg.truncation = self.truncation;
        }
        set(&mut cfg.planar_threshold, self.planar_threshold);
        set(&mut cfg.grouping_method, self.grouping);
        if let Some(off) = self.no_embeddings {
            cfg.grouping.use_embeddings = !off;
        }
        let d = &mut cfg.distill;
        set(&mut d.t_e, self.t_e);
        set(&mut d.t_n, self.t_n);
        set(&mut d.t_p, self.t_p);
        set(&mut d.pixels_per_keyframe, self.pixels_per_kf);
        set(&mut d.replay_window, self.replay);
        set(&mut d.steps_per_keyframe, self.steps_per_kf);
        set(&mut d.learning_rate, self.lr);
        set(&mut d.normal_stride, self.normal_stride);
        let g = &mut cfg.grouping;
        set(&mut g.r_d, self.r_d);
        set(&mut g.r_e, self.r_e);
        set(&mut g.merge_embedding, self.merge_embedding);
        set(&mut g.merge_normal_dot, self.merge_normal_dot);
        set(&mut g.min_vertices, self.min_vertices);
        set(&mut g.max_iterations, self.max_iterations);
        set(&mut g.proposals_per_round, self.proposals_per_round);
        set(&mut g.bandwidth, self.bandwidth);
        set(&mut cfg.bounds_margin, self.bounds_margin);
        let m = &mut cfg.metrics;
        set(&mut m.n_sample_points, self.sample_points);
        set(&mut m.f1_threshold, self.f1_threshold);
        set(&mut m.k_planes, self.k_planes);
        set(&mut m.visibility_margin, self.visibility_margin);
        cfg.grouping.rng_seed = cfg.seed;
        cfg.metrics.rng_seed = cfg.seed;
    }

    /// Defaults with this layer applied, validated.
    pub fn resolve(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ConfigLayer::default().resolve().unwrap();
        assert_eq!(cfg.planar_threshold, 0.25);
        assert_eq!(cfg.voxel_size, 0.04);
        assert!((cfg.truncation() - 0.12).abs() < 1e-12);
        assert_eq!(cfg.distill.t_e, 0.9);
        assert_eq!(cfg.distill.t_n, 0.8);
        assert_eq!(cfg.distill.t_p, 1.0);
        assert_eq!(cfg.distill.pixels_per_keyframe, 400);
        assert_eq!(cfg.distill.replay_window, 10);
        assert_eq!(cfg.distill.steps_per_keyframe, 10);
        assert_eq!(cfg.grouping.r_d, 0.1);
        assert_eq!(cfg.grouping.r_e, 0.5);
        assert_eq!(cfg.grouping.min_vertices, 100);
        assert_eq!(cfg.grouping.bandwidth, 0.25);
        assert!(cfg.use_embeddings());
    }

    #[test]
    fn file_keys_mirror_flags() {
        let layer = parse_config(
            "# tuned\nseed = 7\nvoxel-size = 0.05\nplanar-threshold = 0.3\ngrouping = \"meanshift\"\n\
             t-e = 0.8\nt-n = 0.7\nt-p = 1.2\npixels-per-kf = 100\nreplay = 4\nsteps-per-kf = 2\nlr = 0.01\n",
        )
        .unwrap();
        let cfg = layer.resolve().unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.grouping.rng_seed, 7);
        assert_eq!(cfg.voxel_size, 0.05);
        assert_eq!(cfg.planar_threshold, 0.3);
        assert_eq!(cfg.grouping_method, GroupingMethod::MeanShift);
        assert_eq!(cfg.distill.t_e, 0.8);
        assert_eq!(cfg.distill.t_n, 0.7);
        assert_eq!(cfg.distill.t_p, 1.2);
        assert_eq!(cfg.distill.pixels_per_keyframe, 100);
        assert_eq!(cfg.distill.replay_window, 4);
        assert_eq!(cfg.distill.steps_per_keyframe, 2);
        assert_eq!(cfg.distill.learning_rate, 0.01);
    }

    #[test]
    fn flags_override_file() {
        let file = parse_config("seed = 1\nvoxel-size = 0.05\nno-embeddings = true\n").unwrap();
        let flags = ConfigLayer {
            seed: Some(9),
            ..Default::default()
        };
        let cfg = file.overlay(flags).resolve().unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.voxel_size, 0.05);
        assert!(!cfg.use_embeddings());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(parse_config("voxel_size = 0.05").is_err());
        assert!(parse_config("seed = \"x\"").is_err());
        assert!(parse_config("seed = ").is_err());
        assert!(parse_config("grouping = \"kmeans\"").is_err());
    }

    #[test]
    fn inconsistent_settings_fail_validation() {
        let meanshift_without_embeddings = ConfigLayer {
            grouping: Some(GroupingMethod::MeanShift),
            no_embeddings: Some(true),
            ..Default::default()
        };
        assert!(meanshift_without_embeddings.resolve().is_err());
        let thin_band = ConfigLayer {
            truncation: Some(0.05),
            ..Default::default()
        };
        assert!(thin_band.resolve().is_err());
        let negative_voxel = ConfigLayer {
            voxel_size: Some(-1.0),
            ..Default::default()
        };
        assert!(negative_voxel.resolve().is_err());
    }
}
