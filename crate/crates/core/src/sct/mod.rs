//! Single-camera multi-target tracking.

pub mod assignment;
pub mod kalman;
pub mod max_overlap;
pub mod sort;
pub mod variance;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::BoundingBox;
use crate::types::{CameraId, Detection, FeatureVector, Track};

pub use assignment::{assignment_cost, hungarian};
pub use kalman::{KalmanConfig, KalmanTrackState};
pub use max_overlap::{max_overlap_step, MaxOverlapTracker};
pub use sort::{deep_association_cost, AssociationConfig, SortTracker};
pub use variance::{centroid_variance, variance_filter, OnlineVarianceFilter, VarianceFilterConfig, VarianceMode};

/// A track's reported position in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedObject {
    pub track_id: i64,
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    /// Feature of the detection that updated the track this frame.
    pub feature: Option<FeatureVector>,
    /// Index of that detection within the frame's input list.
    pub detection_index: usize,
}

/// A tracker consumes detections one frame at a time, frames strictly increasing.
pub trait FrameTracker {
    fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<Vec<TrackedObject>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TrackerKind {
    #[serde(rename = "max-overlap")]
    MaxOverlap,
    #[serde(rename = "sort")]
    Sort,
    #[default]
    #[serde(rename = "deepsort")]
    DeepSort,
}

impl TrackerKind {
    pub fn default_association(self) -> AssociationConfig {
        match self {
            TrackerKind::DeepSort => AssociationConfig::deep_sort(),
            _ => AssociationConfig::sort(),
        }
    }

    pub fn build(self, camera: CameraId, assoc: AssociationConfig, kalman: KalmanConfig) -> Box<dyn FrameTracker + Send> {
        match self {
            TrackerKind::MaxOverlap => Box::new(MaxOverlapTracker::new(camera, assoc.iou_gate, 1)),
            TrackerKind::Sort => Box::new(SortTracker::sort(camera, assoc, kalman)),
            TrackerKind::DeepSort => Box::new(SortTracker::deep_sort(camera, assoc, kalman)),
        }
    }
}

impl std::str::FromStr for TrackerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "max-overlap" => Ok(TrackerKind::MaxOverlap),
            "sort" => Ok(TrackerKind::Sort),
            "deepsort" => Ok(TrackerKind::DeepSort),
            other => Err(format!("unknown tracker '{other}' (expected max-overlap, sort or deepsort)")),
        }
    }
}

/// Runs `tracker` over every frame from 0 to the last frame with detections
/// (or `last_frame` if later), returning the per-frame outputs.
pub fn run_frames(
    tracker: &mut dyn FrameTracker,
    frames: &BTreeMap<u32, Vec<Detection>>,
    last_frame: Option<u32>,
) -> Result<Vec<TrackedObject>> {
    let end = frames.keys().next_back().copied().max(last_frame);
    let Some(end) = end else {
        return Ok(Vec::new());
    };
    let mut out = Vec::new();
    for frame in 0..=end {
        let dets = frames.get(&frame).map(Vec::as_slice).unwrap_or(&[]);
        out.extend(tracker.step(frame, dets)?);
    }
    Ok(out)
}

/// Groups tracker outputs into tracks ordered by id.
pub fn collect_tracks(camera: CameraId, outputs: &[TrackedObject]) -> Result<Vec<Track>> {
    let mut by_id: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
    for o in outputs {
        by_id.entry(o.track_id).or_default().push(Detection {
            frame: o.frame,
            bbox: o.bbox,
            confidence: o.confidence,
            feature: o.feature.clone(),
        });
    }
    by_id
        .into_iter()
        .map(|(id, dets)| Track::new(camera, id, dets))
        .collect()
}
