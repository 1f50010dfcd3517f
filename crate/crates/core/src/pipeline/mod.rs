//! Configuration and the track, train, re-identify and evaluate stages.

mod config;
mod stages;

pub use config::{
    AssociationOverrides, CameraInput, EvalConfig, LabeledInput, MaxDist, ModelConfig, PipelineConfig, ReidConfig,
    RoiConfig, VarianceStage, FALLBACK_MAX_DIST,
};
pub use stages::{
    camera_order, eval_mtmc, eval_sct, labeled_dataset, run_eval, run_reid, run_track, run_train, track_camera,
    track_feature_file, track_file, write_eval_outputs, CameraTracks, EvalMode, ReidOutcome, TrainOutcome, LOSS_FILE,
    MODEL_FILE, MTMC_FILE, TRACKS_DIR,
};
