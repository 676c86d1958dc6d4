//! Pipeline configuration (TOML).
//!
//! Tunable parameters (13):
//!
//! | section     | key                 | default |
//! |-------------|---------------------|---------|
//! | `cluster`   | `overlap_threshold` | 0.01    |
//! | `segment`   | `unsharp_radius`    | 1.0     |
//! | `segment`   | `unsharp_amount`    | 1.0     |
//! | `segment`   | `dark_l_thresh`     | 25.0    |
//! | `segment`   | `dark_b_thresh`     | 10.0    |
//! | `segment`   | `dark_dilation`     | 2       |
//! | `segment`   | `nlm_h`             | 0.06    |
//! | `segment`   | `nlm_patch`         | 5       |
//! | `segment`   | `cv_mu`             | 0.25    |
//! | `segment`   | `cv_max_iter`       | 300     |
//! | `segment`   | `seg_margin`        | 2       |
//! | `segment`   | `blend_scale`       | 12.0    |
//! | `stylize`   | `style_lambda`      | 0.05    |
//!
//! Everything else is plumbing: paths, worker count, patch size, count mean,
//! placement attempts, species weights, crop margin, NL-means search window,
//! random-walk step cap, built-in strengths, bridge concurrency, evaluation
//! score threshold. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compose::GenerationConfig;
use crate::error::{Error, Result};
use crate::segment::SegmentParams;
use crate::stylize::StylizeConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// COCO file describing the real annotated images.
    pub annotations: PathBuf,
    /// Directory holding the real images named in `annotations`.
    pub images: PathBuf,
    /// JSON list of empty dishes: `[{"file": ..., "region": {...}}]`.
    pub dishes: PathBuf,
    /// Directory of style PNGs.
    pub styles: PathBuf,
    pub bank: PathBuf,
    pub dataset: PathBuf,
    pub stylized: PathBuf,
    /// COCO file the detector output is scored against.
    pub ground_truth: PathBuf,
    /// Detector output to score.
    pub predictions: PathBuf,
    pub metrics: PathBuf,
    pub preview: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            annotations: "data/annotations.json".into(),
            images: "data/images".into(),
            dishes: "data/dishes.json".into(),
            styles: "data/styles".into(),
            bank: "out/bank".into(),
            dataset: "out/dataset".into(),
            stylized: "out/stylized".into(),
            ground_truth: "data/test_annotations.json".into(),
            predictions: "predictions.json".into(),
            metrics: "out/metrics".into(),
            preview: "out/preview".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub overlap_threshold: f64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            overlap_threshold: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluateConfig {
    /// Detections at or above this score are counted.
    pub score_threshold: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig { score_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreviewConfig {
    pub count: usize,
}

impl Default for PreviewConfig {
    fn default() -> Self {
        PreviewConfig { count: 4 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// 0 means one per available core.
    pub workers: usize,
    pub paths: PathsConfig,
    pub cluster: ClusterConfig,
    pub segment: SegmentParams,
    pub generate: GenerationConfig,
    pub stylize: StylizeConfig,
    pub evaluate: EvaluateConfig,
    pub preview: PreviewConfig,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads, validates and resolves relative paths against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.annotations,
            &mut p.images,
            &mut p.dishes,
            &mut p.styles,
            &mut p.bank,
            &mut p.dataset,
            &mut p.stylized,
            &mut p.ground_truth,
            &mut p.predictions,
            &mut p.metrics,
            &mut p.preview,
        ] {
            if slot.is_relative() {
                *slot = base.join(&*slot);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.cluster.overlap_threshold;
        if !(0.0..1.0).contains(&t) {
            return Err(Error::Config(format!("overlap_threshold {t} must lie in [0, 1)")));
        }
        self.segment.validate()?;
        self.generate.validate()?;
        self.stylize.validate()?;
        let s = self.evaluate.score_threshold;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Config(format!("score_threshold {s} must lie in [0, 1]")));
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
