//! Declarative pipeline configuration (TOML). Relative paths resolve against the directory
//! of the configuration file.
//!
//! ```toml
//! seed = 7
//! tracker = "deepsort"            # max-overlap | sort | deepsort
//!
//! [[cameras]]
//! id = "c001"
//! detections = "c001/det.txt"
//! features = "c001/det_feat.csv"  # optional
//! mask = "c001/roi.pgm"           # required while roi.enabled
//! gt = "c001/gt.txt"              # optional, for eval and training
//! gt_features = "c001/gt_feat.csv"
//!
//! [roi]                            # enabled = true, threshold = 0.0
//! [association]                    # overrides the tracker's defaults field by field
//! [kalman]
//! [variance]                       # enabled = true, variance_threshold = 100.0, ...
//! [model]                          # hidden_dim, embed_dim = 128, normalize = true
//! [train]                          # margin, learning_rate, batch_size, epochs, ...
//! [[train_data]]                   # features = "..."; defaults to the cameras' gt_features
//! [reid]                           # max_dist = "auto" | number, camera_order, model
//! [eval]                           # gt_mtmc, iou_threshold
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::TrainConfig;
use crate::sct::{AssociationConfig, KalmanConfig, TrackerKind, VarianceFilterConfig, VarianceMode};
use crate::types::CameraId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraInput {
    pub id: String,
    pub detections: PathBuf,
    pub features: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub gt_features: Option<PathBuf>,
}

impl CameraInput {
    pub fn camera(&self) -> Result<CameraId> {
        CameraId::parse(&self.id).ok_or_else(|| Error::Config(format!("invalid camera id '{}'", self.id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledInput {
    /// Feature sidecar keyed by identity; the key is the training label.
    pub features: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoiConfig {
    pub enabled: bool,
    /// Minimum distance (pixels) of a detection centroid inside the region border.
    pub threshold: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociationOverrides {
    pub iou_gate: Option<f64>,
    pub appearance_weight: Option<f64>,
    pub max_age: Option<u32>,
    pub min_hits: Option<u32>,
    pub gallery_size: Option<usize>,
}

impl AssociationOverrides {
    pub fn apply(&self, mut base: AssociationConfig) -> AssociationConfig {
        if let Some(v) = self.iou_gate {
            base.iou_gate = v;
        }
        if let Some(v) = self.appearance_weight {
            base.appearance_weight = v;
        }
        if let Some(v) = self.max_age {
            base.max_age = v;
        }
        if let Some(v) = self.min_hits {
            base.min_hits = v;
        }
        if let Some(v) = self.gallery_size {
            base.gallery_size = v;
        }
        base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceStage {
    pub enabled: bool,
    pub variance_threshold: f64,
    pub min_track_length: usize,
    pub mode: VarianceMode,
}

impl Default for VarianceStage {
    fn default() -> Self {
        let f = VarianceFilterConfig::default();
        Self {
            enabled: true,
            variance_threshold: f.variance_threshold,
            min_track_length: f.min_track_length,
            mode: f.mode,
        }
    }
}

impl VarianceStage {
    pub fn filter(&self) -> VarianceFilterConfig {
        VarianceFilterConfig {
            variance_threshold: self.variance_threshold,
            min_track_length: self.min_track_length,
            mode: self.mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden_dim: Option<usize>,
    pub embed_dim: usize,
    pub normalize: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: None,
            embed_dim: 128,
            normalize: true,
        }
    }
}

/// Either a fixed threshold or `"auto"` (use the checkpoint's calibrated value).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum MaxDist {
    #[default]
    Auto,
    Value(f64),
}

/// Threshold used when `max_dist` is `auto` and the checkpoint carries no calibration.
pub const FALLBACK_MAX_DIST: f64 = 1.0;

impl MaxDist {
    pub fn resolve(self, calibrated: Option<f64>) -> f64 {
        match self {
            MaxDist::Value(v) => v,
            MaxDist::Auto => calibrated.unwrap_or(FALLBACK_MAX_DIST),
        }
    }
}

impl std::str::FromStr for MaxDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(MaxDist::Auto);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 => Ok(MaxDist::Value(v)),
            _ => Err(Error::Config(format!("max_dist must be \"auto\" or a non-negative number, got '{s}'"))),
        }
    }
}

impl Serialize for MaxDist {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            MaxDist::Auto => s.serialize_str("auto"),
            MaxDist::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for MaxDist {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(v) => v.to_string().parse(),
            Raw::Int(v) => v.to_string().parse(),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReidConfig {
    pub max_dist: MaxDist,
    /// Order in which cameras are merged; ascending camera id when absent.
    pub camera_order: Option<Vec<String>>,
    /// Checkpoint path; `<out>/model.txt` when absent.
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Multi-camera ground truth in the submission format.
    pub gt_mtmc: Option<PathBuf>,
    pub iou_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            gt_mtmc: None,
            iou_threshold: crate::eval::IOU_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub tracker: TrackerKind,
    #[serde(default)]
    pub cameras: Vec<CameraInput>,
    #[serde(default)]
    pub roi: RoiConfig,
    #[serde(default)]
    pub association: AssociationOverrides,
    #[serde(default)]
    pub kalman: KalmanConfig,
    #[serde(default)]
    pub variance: VarianceStage,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub train_data: Vec<LabeledInput>,
    #[serde(default)]
    pub reid: ReidConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for c in &mut self.cameras {
            fix(&mut c.detections);
            [&mut c.features, &mut c.mask, &mut c.gt, &mut c.gt_features]
                .into_iter()
                .flatten()
                .for_each(fix);
        }
        for t in &mut self.train_data {
            fix(&mut t.features);
        }
        if let Some(p) = &mut self.reid.model {
            fix(p);
        }
        if let Some(p) = &mut self.eval.gt_mtmc {
            fix(p);
        }
    }

    pub fn association(&self) -> AssociationConfig {
        self.association.apply(self.tracker.default_association())
    }

    /// Training configuration; the pipeline seed is the single source of randomness.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Checks values and that every referenced input exists. Ground-truth and training
    /// paths are only checked by the stages that read them.
    pub fn validate(&self) -> Result<()> {
        self.association().validate()?;
        self.variance.filter().validate()?;
        self.train_config().validate()?;
        if !(self.roi.threshold.is_finite()) {
            return Err(Error::Config("roi.threshold must be finite".into()));
        }
        if self.model.embed_dim < 2 {
            return Err(Error::Config("model.embed_dim must be at least 2".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.cameras {
            let cam = c.camera()?;
            if !seen.insert(cam) {
                return Err(Error::Config(format!("camera {cam} is listed twice")));
            }
            must_exist(&c.detections, "detections")?;
            if let Some(p) = &c.features {
                must_exist(p, "features")?;
            }
            match &c.mask {
                Some(p) => must_exist(p, "mask")?,
                None if self.roi.enabled => {
                    return Err(Error::Config(format!(
                        "camera {cam} has no mask but roi filtering is enabled"
                    )))
                }
                None => {}
            }
        }
        if let Some(order) = &self.reid.camera_order {
            for id in order {
                CameraId::parse(id).ok_or_else(|| Error::Config(format!("invalid camera id '{id}' in camera_order")))?;
            }
        }
        Ok(())
    }
}

fn must_exist(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file {} does not exist", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = PipelineConfig::parse(
            r#"
            tracker = "sort"
            [association]
            max_age = 4
            [reid]
            max_dist = 0.75
            "#,
        )
        .unwrap();
        let a = cfg.association();
        assert_eq!(a.max_age, 4);
        assert_eq!(a.iou_gate, AssociationConfig::sort().iou_gate);
        assert_eq!(cfg.reid.max_dist, MaxDist::Value(0.75));
        assert!(cfg.roi.enabled && cfg.variance.enabled);

        let auto = PipelineConfig::parse("[reid]\nmax_dist = \"auto\"\n").unwrap();
        assert_eq!(auto.reid.max_dist, MaxDist::Auto);
        assert_eq!(auto.tracker, TrackerKind::DeepSort);
        assert_eq!(auto.reid.max_dist.resolve(None), FALLBACK_MAX_DIST);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        assert!(matches!(PipelineConfig::parse("bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::parse("tracker = \"kcf\""), Err(Error::Config(_))));
        assert!(PipelineConfig::parse("[reid]\nmax_dist = \"near\"").is_err());
        assert!(PipelineConfig::parse("[reid]\nmax_dist = -1").is_err());
    }

    #[test]
    fn paths_resolve_and_must_exist() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("det.txt"), "").unwrap();
        let text = "[[cameras]]\nid = \"c001\"\ndetections = \"det.txt\"\nmask = \"roi.pgm\"\n";
        let path = dir.path().join("p.toml");
        std::fs::write(&path, text).unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.cameras[0].detections, dir.path().join("det.txt"));
        // mask is missing on disk
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let mut no_roi = cfg.clone();
        no_roi.roi.enabled = false;
        no_roi.cameras[0].mask = None;
        no_roi.validate().unwrap();
        let mut missing_mask = no_roi.clone();
        missing_mask.roi.enabled = true;
        assert!(missing_mask.validate().is_err());
    }
}
