//! Kalman + Hungarian tracker. With appearance enabled, association cost is a weighted sum
//! of motion cost (`1 - IoU` against the predicted box) and the minimum cosine distance to
//! the track's gallery of recent features.

use std::collections::VecDeque;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::types::{CameraId, Detection, FeatureVector};

use super::assignment::hungarian;
use super::kalman::{KalmanConfig, KalmanTrackState};
use super::{FrameTracker, TrackedObject};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssociationConfig {
    /// Pairs whose IoU with the predicted box is below this are never associated.
    pub iou_gate: f64,
    /// Weight `lambda` of the motion term; `1 - lambda` weights appearance.
    pub appearance_weight: f64,
    /// Frames a track may go without an update before deletion.
    pub max_age: u32,
    /// Consecutive hits before a track is reported.
    pub min_hits: u32,
    /// Number of recent features kept per track.
    pub gallery_size: usize,
}

impl AssociationConfig {
    pub fn sort() -> Self {
        Self {
            iou_gate: 0.5,
            appearance_weight: 1.0,
            max_age: 1,
            min_hits: 3,
            gallery_size: 100,
        }
    }

    pub fn deep_sort() -> Self {
        Self {
            appearance_weight: 0.5,
            max_age: 30,
            ..Self::sort()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iou_gate) {
            return Err(Error::Config(format!("iou_gate {} outside [0, 1]", self.iou_gate)));
        }
        if !(0.0..=1.0).contains(&self.appearance_weight) {
            return Err(Error::Config(format!(
                "appearance_weight {} outside [0, 1]",
                self.appearance_weight
            )));
        }
        if self.max_age < 1 {
            return Err(Error::Config("max_age must be at least 1".into()));
        }
        if self.gallery_size < 1 {
            return Err(Error::Config("gallery_size must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for AssociationConfig {
    fn default() -> Self {
        Self::sort()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssociationCost {
    pub cost: f64,
    pub iou: f64,
    /// True when appearance could not be used and the cost is pure motion.
    pub motion_only: bool,
}

/// Weighted motion + appearance cost between a track and a detection.
pub fn deep_association_cost(
    predicted: &BoundingBox,
    gallery: &[FeatureVector],
    det: &Detection,
    lambda: f64,
) -> AssociationCost {
    let iou = predicted.iou(&det.bbox);
    let motion = 1.0 - iou;
    let appearance = det.feature.as_ref().and_then(|f| {
        gallery
            .iter()
            .filter(|g| g.dim() == f.dim())
            .map(|g| g.cosine_distance(f))
            .min_by(f64::total_cmp)
    });
    match appearance {
        Some(d_app) => AssociationCost {
            cost: lambda * motion + (1.0 - lambda) * d_app,
            iou,
            motion_only: false,
        },
        None => AssociationCost {
            cost: motion,
            iou,
            motion_only: true,
        },
    }
}

#[derive(Debug, Clone)]
struct LiveTrack {
    id: i64,
    state: KalmanTrackState,
    confirmed: bool,
    gallery: VecDeque<FeatureVector>,
    last_detection: Option<(usize, Detection)>,
}

#[derive(Debug)]
pub struct SortTracker {
    camera: CameraId,
    assoc: AssociationConfig,
    kalman: KalmanConfig,
    use_appearance: bool,
    tracks: Vec<LiveTrack>,
    next_id: i64,
    last_frame: Option<u32>,
    frames_seen: u32,
    appearance_fallbacks: usize,
}

impl SortTracker {
    /// Motion-only tracker.
    pub fn sort(camera: CameraId, assoc: AssociationConfig, kalman: KalmanConfig) -> Self {
        Self::new(camera, assoc, kalman, false)
    }

    /// Tracker that mixes appearance into the association cost.
    pub fn deep_sort(camera: CameraId, assoc: AssociationConfig, kalman: KalmanConfig) -> Self {
        Self::new(camera, assoc, kalman, true)
    }

    fn new(camera: CameraId, assoc: AssociationConfig, kalman: KalmanConfig, use_appearance: bool) -> Self {
        Self {
            camera,
            assoc,
            kalman,
            use_appearance,
            tracks: Vec::new(),
            next_id: 1,
            last_frame: None,
            frames_seen: 0,
            appearance_fallbacks: 0,
        }
    }

    pub fn camera(&self) -> CameraId {
        self.camera
    }

    /// Number of associations that fell back to motion only for lack of features.
    pub fn appearance_fallbacks(&self) -> usize {
        self.appearance_fallbacks
    }

    pub fn live_track_ids(&self) -> Vec<i64> {
        self.tracks.iter().map(|t| t.id).collect()
    }

    fn predict_all(&mut self) {
        for t in &mut self.tracks {
            t.state = t.state.predict(&self.kalman);
        }
        self.tracks.retain(|t| !t.state.degenerate);
    }

    fn prune(&mut self) {
        let max_age = self.assoc.max_age;
        self.tracks.retain(|t| {
            let tsu = t.state.time_since_update;
            tsu <= max_age && (t.confirmed || tsu == 0)
        });
    }

    fn cost_matrix(&mut self, dets: &[Detection]) -> Vec<Vec<f64>> {
        let lambda = if self.use_appearance {
            self.assoc.appearance_weight
        } else {
            1.0
        };
        let gate = self.assoc.iou_gate;
        let mut fallbacks = 0;
        let matrix = self
            .tracks
            .iter()
            .map(|t| {
                let predicted = t.state.bbox();
                // galleries are made contiguous after every push
                let gallery = t.gallery.as_slices().0;
                debug_assert_eq!(gallery.len(), t.gallery.len());
                dets.iter()
                    .map(|d| {
                        let c = if self.use_appearance && lambda < 1.0 {
                            let c = deep_association_cost(&predicted, gallery, d, lambda);
                            if c.motion_only {
                                fallbacks += 1;
                            }
                            c
                        } else {
                            let iou = predicted.iou(&d.bbox);
                            AssociationCost { cost: 1.0 - iou, iou, motion_only: true }
                        };
                        if c.iou < gate || c.iou <= 0.0 {
                            f64::INFINITY
                        } else {
                            c.cost
                        }
                    })
                    .collect()
            })
            .collect();
        if fallbacks > 0 {
            warn!(
                "{}: {fallbacks} association(s) without appearance features, using motion only",
                self.camera
            );
            self.appearance_fallbacks += fallbacks;
        }
        matrix
    }
}

impl FrameTracker for SortTracker {
    fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<Vec<TrackedObject>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { frame, last });
            }
            // coast through frames that had no detections at all
            for _ in last + 1..frame {
                self.frames_seen += 1;
                self.predict_all();
                self.prune();
            }
        }
        self.last_frame = Some(frame);
        self.frames_seen += 1;
        self.predict_all();

        let cost = self.cost_matrix(dets);
        let pairs = if self.tracks.is_empty() { Vec::new() } else { hungarian(&cost) };

        let mut det_used = vec![false; dets.len()];
        for &(t, d) in &pairs {
            let det = &dets[d];
            let track = &mut self.tracks[t];
            track.state = track.state.update(&det.bbox, &self.kalman)?;
            track.last_detection = Some((d, det.clone()));
            if let Some(f) = &det.feature {
                track.gallery.push_back(f.clone());
                while track.gallery.len() > self.assoc.gallery_size {
                    track.gallery.pop_front();
                }
                track.gallery.make_contiguous();
            }
            det_used[d] = true;
        }
        for (d, det) in dets.iter().enumerate() {
            if det_used[d] {
                continue;
            }
            let mut gallery = VecDeque::new();
            if let Some(f) = &det.feature {
                gallery.push_back(f.clone());
            }
            self.tracks.push(LiveTrack {
                id: self.next_id,
                state: KalmanTrackState::initiate(&det.bbox, &self.kalman),
                confirmed: false,
                gallery,
                last_detection: Some((d, det.clone())),
            });
            self.next_id += 1;
        }

        let warm_up = self.frames_seen <= self.assoc.min_hits;
        let mut out = Vec::new();
        for t in &mut self.tracks {
            if t.state.time_since_update != 0 {
                continue;
            }
            if t.state.hit_streak >= self.assoc.min_hits || warm_up {
                t.confirmed = true;
            }
            if t.confirmed {
                let (d, det) = t.last_detection.as_ref().expect("updated track has a detection");
                out.push(TrackedObject {
                    track_id: t.id,
                    frame,
                    bbox: t.state.bbox(),
                    confidence: det.confidence,
                    feature: det.feature.clone(),
                    detection_index: *d,
                });
            }
        }
        self.prune();
        out.sort_by_key(|o| o.track_id);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(l: f64, t: f64, w: f64, h: f64) -> Detection {
        Detection::new(0, BoundingBox::new(l, t, w, h).unwrap(), 0.9).unwrap()
    }

    fn feat(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn cost_boundaries() {
        let pred = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let d = det(0.0, 0.0, 10.0, 20.0).with_feature(feat(&[1.0, 0.0]));
        let gallery = vec![feat(&[1.0, 0.0])];
        let c = deep_association_cost(&pred, &gallery, &d, 1.0);
        assert_eq!(c.cost, 1.0 - pred.iou(&d.bbox));
        let c = deep_association_cost(&pred, &gallery, &d, 0.0);
        assert_eq!(c.cost, 0.0);
        assert!(!c.motion_only);
    }

    #[test]
    fn weighted_sum_arithmetic() {
        // iou 0.5 and a cosine distance of 0.2
        let pred = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let theta = (0.8f64).acos();
        let d = det(0.0, 0.0, 10.0, 20.0).with_feature(feat(&[theta.cos(), theta.sin()]));
        let c = deep_association_cost(&pred, &[feat(&[1.0, 0.0])], &d, 0.5);
        assert!((c.iou - 0.5).abs() < 1e-12);
        assert!((c.cost - 0.35).abs() < 1e-12);
    }

    #[test]
    fn min_over_gallery() {
        let pred = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let d = det(0.0, 0.0, 10.0, 10.0).with_feature(feat(&[0.0, 1.0]));
        let gallery = vec![feat(&[1.0, 0.0]), feat(&[0.0, 3.0])];
        assert_eq!(deep_association_cost(&pred, &gallery, &d, 0.0).cost, 0.0);
    }

    #[test]
    fn missing_features_fall_back_to_motion() {
        let pred = BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap();
        let d = det(0.0, 0.0, 10.0, 20.0);
        let c = deep_association_cost(&pred, &[feat(&[1.0])], &d, 0.3);
        assert!(c.motion_only);
        assert_eq!(c.cost, 0.5);
        let d = d.with_feature(feat(&[1.0]));
        assert!(deep_association_cost(&pred, &[], &d, 0.3).motion_only);
    }

    #[test]
    fn config_validation() {
        assert!(AssociationConfig::sort().validate().is_ok());
        assert!(AssociationConfig { iou_gate: 1.5, ..AssociationConfig::sort() }.validate().is_err());
        assert!(AssociationConfig { appearance_weight: -0.1, ..AssociationConfig::sort() }.validate().is_err());
        assert!(AssociationConfig { max_age: 0, ..AssociationConfig::sort() }.validate().is_err());
    }

    #[test]
    fn out_of_order_frame_is_error() {
        let mut t = SortTracker::sort(CameraId(1), AssociationConfig::sort(), KalmanConfig::default());
        t.step(5, &[]).unwrap();
        assert!(matches!(t.step(5, &[]), Err(Error::OutOfOrderFrame { .. })));
        assert!(t.step(3, &[]).is_err());
    }

    #[test]
    fn single_linear_object_keeps_id() {
        let mut t = SortTracker::sort(CameraId(1), AssociationConfig::sort(), KalmanConfig::default());
        let mut ids = Vec::new();
        for f in 0..40u32 {
            let out = t.step(f, &[det(10.0 + 3.0 * f as f64, 50.0, 40.0, 30.0)]).unwrap();
            assert_eq!(out.len(), 1, "frame {f}");
            ids.push(out[0].track_id);
        }
        assert!(ids.iter().all(|&i| i == ids[0]));
    }

    #[test]
    fn tentative_tracks_need_consecutive_hits() {
        let mut t = SortTracker::sort(CameraId(1), AssociationConfig::sort(), KalmanConfig::default());
        for f in 0..5 {
            t.step(f, &[]).unwrap();
        }
        let b = det(0.0, 0.0, 20.0, 20.0);
        assert!(t.step(5, std::slice::from_ref(&b)).unwrap().is_empty());
        assert!(t.step(6, std::slice::from_ref(&b)).unwrap().is_empty());
        assert_eq!(t.step(7, std::slice::from_ref(&b)).unwrap().len(), 1);
    }
}
