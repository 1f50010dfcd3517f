//! The pipeline stages. Each reads its inputs from the configuration and the output
//! directory of earlier stages, and writes its own files under the output directory:
//!
//! ```text
//! <out>/tracks/<camera>.txt        per-camera tracks (MOT rows)
//! <out>/tracks/<camera>_feat.csv   features of tracked detections, keyed by track id
//! <out>/model.txt, <out>/loss.csv  embedding checkpoint and per-epoch loss
//! <out>/mtmc.txt                   cross-camera identities
//! <out>/report_<mode>.txt          structured evaluation report (plus _table.txt)
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{CameraInput, PipelineConfig};
use crate::error::{Error, Result};
use crate::eval::{self, EvalSummary, IdentityBox};
use crate::io;
use crate::metric::{calibrate_max_dist, fit, Checkpoint, EmbeddingModel};
use crate::mtmc::{mtmc_records, sequential_reid, GlobalIdMap};
use crate::roi::{filter_by_roi, RoiMask};
use crate::sct::{collect_tracks, run_frames, variance_filter, OnlineVarianceFilter, VarianceMode};
use crate::types::{CameraId, FeatureVector, Track};

pub const TRACKS_DIR: &str = "tracks";
pub const MODEL_FILE: &str = "model.txt";
pub const LOSS_FILE: &str = "loss.csv";
pub const MTMC_FILE: &str = "mtmc.txt";

pub fn track_file(out: &Path, camera: CameraId) -> PathBuf {
    out.join(TRACKS_DIR).join(format!("{camera}.txt"))
}

pub fn track_feature_file(out: &Path, camera: CameraId) -> PathBuf {
    out.join(TRACKS_DIR).join(format!("{camera}_feat.csv"))
}

#[derive(Debug, Clone)]
pub struct CameraTracks {
    pub camera: CameraId,
    pub tracks: Vec<Track>,
    pub detections: usize,
    pub roi_removed: usize,
    /// Tracks removed by the variance filter.
    pub variance_removed: Vec<i64>,
}

/// Region filter, tracker and variance filter for one camera, in that order.
pub fn track_camera(cfg: &PipelineConfig, input: &CameraInput) -> Result<CameraTracks> {
    let camera = input.camera()?;
    let records = io::read_mot(&input.detections)?;
    let mut frames = io::detections_by_frame(&records);
    if let Some(path) = &input.features {
        io::attach_detection_features(camera, &mut frames, &io::read_features(path)?);
    }

    let mut roi_removed = 0;
    if cfg.roi.enabled {
        let path = input
            .mask
            .as_ref()
            .ok_or_else(|| Error::Config(format!("camera {camera} has no mask but roi filtering is enabled")))?;
        let mask = RoiMask::read_pgm(path)?;
        for dets in frames.values_mut() {
            let kept = filter_by_roi(dets, &mask, cfg.roi.threshold);
            roi_removed += dets.len() - kept.len();
            *dets = kept;
        }
    }

    let mut tracker = cfg.tracker.build(camera, cfg.association(), cfg.kalman);
    let mut outputs = run_frames(tracker.as_mut(), &frames, None)?;
    let mut variance_removed = Vec::new();
    let tracks = if !cfg.variance.enabled {
        collect_tracks(camera, &outputs)?
    } else {
        match cfg.variance.mode {
            VarianceMode::Post => {
                let all = collect_tracks(camera, &outputs)?;
                let kept = variance_filter(all.clone(), &cfg.variance.filter());
                variance_removed = all
                    .iter()
                    .map(Track::track_id)
                    .filter(|id| !kept.iter().any(|k| k.track_id() == *id))
                    .collect();
                kept
            }
            VarianceMode::Online => {
                let mut online = OnlineVarianceFilter::new(cfg.variance.filter());
                outputs = online.process(outputs);
                variance_removed = online.dropped_ids().collect();
                collect_tracks(camera, &outputs)?
            }
        }
    };
    log::info!(
        "camera {camera}: {} detections, {roi_removed} outside the region, {} tracks kept, {} removed as stationary",
        records.len(),
        tracks.len(),
        variance_removed.len()
    );
    Ok(CameraTracks {
        camera,
        tracks,
        detections: records.len(),
        roi_removed,
        variance_removed,
    })
}

/// Tracks every configured camera (concurrently) and writes the track files.
pub fn run_track(cfg: &PipelineConfig, out: &Path) -> Result<Vec<CameraTracks>> {
    cfg.validate()?;
    let results: Vec<Result<CameraTracks>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .cameras
            .iter()
            .map(|input| s.spawn(move || track_camera(cfg, input)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("tracking thread panicked"))
            .collect()
    });
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;
    for r in &results {
        io::write_mot(&track_file(out, r.camera), &io::records_from_tracks(&r.tracks))?;
        io::write_features(
            &track_feature_file(out, r.camera),
            &io::feature_records_from_tracks(&r.tracks),
        )?;
    }
    Ok(results)
}

/// Labelled features for training: every `train_data` sidecar, or the cameras' ground-truth
/// feature files when none is listed. The sidecar key is the label.
pub fn labeled_dataset(cfg: &PipelineConfig) -> Result<Vec<(FeatureVector, i64)>> {
    let paths: Vec<&PathBuf> = if cfg.train_data.is_empty() {
        cfg.cameras.iter().filter_map(|c| c.gt_features.as_ref()).collect()
    } else {
        cfg.train_data.iter().map(|t| &t.features).collect()
    };
    if paths.is_empty() {
        return Err(Error::Config(
            "no training data: add [[train_data]] entries or gt_features to the cameras".into(),
        ));
    }
    let mut out = Vec::new();
    for p in paths {
        out.extend(io::read_features(p)?.into_iter().map(|r| (r.feature, r.key)));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub loss_history: Vec<f64>,
}

pub fn run_train(cfg: &PipelineConfig, out: &Path) -> Result<TrainOutcome> {
    cfg.train_config().validate()?;
    let data = labeled_dataset(cfg)?;
    let dim = data
        .first()
        .map(|(f, _)| f.dim())
        .ok_or_else(|| Error::InvalidValue("training data is empty".into()))?;
    let model = EmbeddingModel::new(
        dim,
        cfg.model.hidden_dim,
        cfg.model.embed_dim,
        cfg.model.normalize,
        cfg.seed,
    )?;
    let fitted = fit(&model, &data, &cfg.train_config())?;
    let calibrated_max_dist = calibrate_max_dist(&fitted.model, &data)?;
    let checkpoint = Checkpoint {
        model: fitted.model,
        calibrated_max_dist,
    };
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    checkpoint.save(&out.join(MODEL_FILE))?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in fitted.loss_history.iter().enumerate() {
        let _ = writeln!(csv, "{},{l}", i + 1);
    }
    let loss_path = out.join(LOSS_FILE);
    std::fs::write(&loss_path, csv).map_err(|e| Error::io(&loss_path, e))?;
    log::info!(
        "trained on {} samples; final loss {:.6}; calibrated max_dist {:?}",
        data.len(),
        fitted.loss_history.last().copied().unwrap_or(0.0),
        calibrated_max_dist
    );
    Ok(TrainOutcome {
        checkpoint,
        loss_history: fitted.loss_history,
    })
}

/// Camera processing order: `reid.camera_order` if given, otherwise ascending id.
pub fn camera_order(cfg: &PipelineConfig) -> Result<Vec<CameraId>> {
    match &cfg.reid.camera_order {
        Some(order) => order
            .iter()
            .map(|s| CameraId::parse(s).ok_or_else(|| Error::Config(format!("invalid camera id '{s}'"))))
            .collect(),
        None => {
            let mut ids = cfg.cameras.iter().map(CameraInput::camera).collect::<Result<Vec<_>>>()?;
            ids.sort_unstable();
            Ok(ids)
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReidOutcome {
    pub map: GlobalIdMap,
    pub max_dist: f64,
    pub records: Vec<io::MtmcRecord>,
}

pub fn run_reid(cfg: &PipelineConfig, out: &Path) -> Result<ReidOutcome> {
    let model_path = cfg.reid.model.clone().unwrap_or_else(|| out.join(MODEL_FILE));
    let checkpoint = Checkpoint::load(&model_path)?;
    let max_dist = cfg.reid.max_dist.resolve(checkpoint.calibrated_max_dist);
    let per_camera = camera_order(cfg)?
        .into_iter()
        .map(|cam| {
            let records = io::read_mot(&track_file(out, cam))?;
            let feats = io::read_features(&track_feature_file(out, cam))?;
            io::tracks_from_records(cam, &records, &feats)
        })
        .collect::<Result<Vec<_>>>()?;
    let map = sequential_reid(&per_camera, &checkpoint.model, max_dist)?;
    let records = mtmc_records(&per_camera, &map)?;
    io::write_mtmc(&out.join(MTMC_FILE), &records)?;
    log::info!(
        "re-identified {} tracks into {} global identities (max_dist {max_dist})",
        map.len(),
        map.global_count()
    );
    Ok(ReidOutcome {
        map,
        max_dist,
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Sct,
    Mtmc,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::Sct => "sct",
            EvalMode::Mtmc => "mtmc",
        }
    }
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sct" => Ok(EvalMode::Sct),
            "mtmc" => Ok(EvalMode::Mtmc),
            other => Err(Error::Config(format!("unknown eval mode '{other}' (expected sct or mtmc)"))),
        }
    }
}

fn warn_frame_range(name: &str, gt: &[IdentityBox], pred: &[IdentityBox]) {
    let mut gt_last: BTreeMap<CameraId, u32> = BTreeMap::new();
    for b in gt {
        let e = gt_last.entry(b.camera).or_insert(0);
        *e = (*e).max(b.frame);
    }
    let outside = pred
        .iter()
        .filter(|b| gt_last.get(&b.camera).is_none_or(|&last| b.frame > last))
        .count();
    if outside > 0 {
        log::warn!("{name}: {outside} predicted boxes lie beyond the ground-truth frame range");
    }
}

/// One sequence per `(name, gt file, prediction file)` triple of MOT files.
pub fn eval_sct(pairs: &[(String, PathBuf, PathBuf)], iou_threshold: f64) -> Result<EvalSummary> {
    let reports = pairs
        .iter()
        .map(|(name, gt_path, pred_path)| {
            let cam = CameraId::parse(name).unwrap_or(CameraId(0));
            let gt = eval::boxes_from_mot(cam, &io::read_mot(gt_path)?);
            let pred = eval::boxes_from_mot(cam, &io::read_mot(pred_path)?);
            warn_frame_range(name, &gt, &pred);
            Ok(eval::evaluate(name, &gt, &pred, iou_threshold))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalSummary::new(reports))
}

/// All cameras as one sequence, identities matched globally, frames per camera.
pub fn eval_mtmc(gt_path: &Path, pred_path: &Path, iou_threshold: f64) -> Result<EvalSummary> {
    let gt = eval::boxes_from_mtmc(&io::read_mtmc(gt_path)?);
    let pred = eval::boxes_from_mtmc(&io::read_mtmc(pred_path)?);
    warn_frame_range("mtmc", &gt, &pred);
    Ok(EvalSummary::new(vec![eval::evaluate("mtmc", &gt, &pred, iou_threshold)]))
}

/// Evaluates the pipeline's own outputs against the configured ground truth.
pub fn run_eval(cfg: &PipelineConfig, out: &Path, mode: EvalMode) -> Result<EvalSummary> {
    let summary = match mode {
        EvalMode::Sct => {
            let pairs = cfg
                .cameras
                .iter()
                .map(|c| {
                    let cam = c.camera()?;
                    let gt = c
                        .gt
                        .clone()
                        .ok_or_else(|| Error::Config(format!("camera {cam} has no gt file")))?;
                    Ok((cam.to_string(), gt, track_file(out, cam)))
                })
                .collect::<Result<Vec<_>>>()?;
            eval_sct(&pairs, cfg.eval.iou_threshold)?
        }
        EvalMode::Mtmc => {
            let gt = cfg
                .eval
                .gt_mtmc
                .as_ref()
                .ok_or_else(|| Error::Config("eval.gt_mtmc is not set".into()))?;
            eval_mtmc(gt, &out.join(MTMC_FILE), cfg.eval.iou_threshold)?
        }
    };
    write_eval_outputs(out, mode, &summary)?;
    Ok(summary)
}

pub fn write_eval_outputs(out: &Path, mode: EvalMode, summary: &EvalSummary) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    eval::write_report(&out.join(format!("report_{}.txt", mode.name())), summary)?;
    let table = out.join(format!("report_{}_table.txt", mode.name()));
    std::fs::write(&table, eval::format_report_table(summary)).map_err(|e| Error::io(&table, e))
}
