//! Detections, tracks and appearance features.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// Numeric camera identifier, rendered as `c001` style names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CameraId(pub u32);

impl CameraId {
    /// Parses `c001`, `C1` or plain `1`.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        let digits = s.strip_prefix(['c', 'C']).unwrap_or(s);
        digits.parse().ok().map(CameraId)
    }
}

impl fmt::Display for CameraId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{:03}", self.0)
    }
}

/// Fixed-length appearance vector with finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "feature component {i} is not finite"
            )));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `1 - cos(a, b)`. Zero vectors are treated as maximally dissimilar (distance 1).
    pub fn cosine_distance(&self, other: &FeatureVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        let denom = self.norm() * other.norm();
        if denom <= f64::EPSILON {
            return 1.0;
        }
        (1.0 - dot / denom).max(0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    /// 0-based frame index.
    pub frame: u32,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub feature: Option<FeatureVector>,
}

impl Detection {
    pub fn new(frame: u32, bbox: BoundingBox, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::InvalidValue(format!(
                "confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            frame,
            bbox,
            confidence,
            feature: None,
        })
    }

    pub fn with_feature(mut self, feature: FeatureVector) -> Self {
        self.feature = Some(feature);
        self
    }
}

/// Detections of one object in one camera, strictly ordered by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    camera: CameraId,
    track_id: i64,
    detections: Vec<Detection>,
}

impl Track {
    pub fn new(camera: CameraId, track_id: i64, detections: Vec<Detection>) -> Result<Self> {
        if detections.is_empty() {
            return Err(Error::InvalidValue(format!(
                "track {track_id} in {camera} has no detections"
            )));
        }
        if let Some(w) = detections.windows(2).find(|w| w[1].frame <= w[0].frame) {
            return Err(Error::InvalidValue(format!(
                "track {track_id} in {camera}: frame {} follows frame {}",
                w[1].frame, w[0].frame
            )));
        }
        Ok(Self {
            camera,
            track_id,
            detections,
        })
    }

    pub fn camera(&self) -> CameraId {
        self.camera
    }

    pub fn track_id(&self) -> i64 {
        self.track_id
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn first_frame(&self) -> u32 {
        self.detections[0].frame
    }

    pub fn last_frame(&self) -> u32 {
        self.detections[self.detections.len() - 1].frame
    }

    pub fn last(&self) -> &Detection {
        &self.detections[self.detections.len() - 1]
    }

    /// Appends a detection; its frame must follow the current last frame.
    pub fn push(&mut self, det: Detection) -> Result<()> {
        if det.frame <= self.last_frame() {
            return Err(Error::OutOfOrderFrame {
                frame: det.frame,
                last: self.last_frame(),
            });
        }
        self.detections.push(det);
        Ok(())
    }

    pub fn with_track_id(mut self, track_id: i64) -> Self {
        self.track_id = track_id;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(frame: u32) -> Detection {
        Detection::new(frame, BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn camera_id_parsing() {
        assert_eq!(CameraId::parse("c010"), Some(CameraId(10)));
        assert_eq!(CameraId::parse("7"), Some(CameraId(7)));
        assert_eq!(CameraId::parse("cam"), None);
        assert_eq!(CameraId(3).to_string(), "c003");
    }

    #[test]
    fn track_invariants() {
        assert!(Track::new(CameraId(1), 1, vec![]).is_err());
        assert!(Track::new(CameraId(1), 1, vec![det(2), det(2)]).is_err());
        let mut t = Track::new(CameraId(1), 1, vec![det(0), det(3)]).unwrap();
        assert!(t.push(det(3)).is_err());
        t.push(det(4)).unwrap();
        assert_eq!(t.last_frame(), 4);
    }

    #[test]
    fn confidence_range_checked() {
        let b = BoundingBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        assert!(Detection::new(0, b, 1.5).is_err());
        assert!(Detection::new(0, b, -0.1).is_err());
    }

    #[test]
    fn feature_vector_validation_and_cosine() {
        assert!(FeatureVector::new(vec![1.0, f64::INFINITY]).is_err());
        let a = FeatureVector::new(vec![1.0, 0.0]).unwrap();
        let b = FeatureVector::new(vec![0.0, 2.0]).unwrap();
        assert_eq!(a.cosine_distance(&a), 0.0);
        assert!((a.cosine_distance(&b) - 1.0).abs() < 1e-15);
        let z = FeatureVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(a.cosine_distance(&z), 1.0);
    }
}
