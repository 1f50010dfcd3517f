//! Multi-target multi-camera vehicle tracking.
//!
//! The pipeline runs per camera: region-of-interest filtering of detections, a
//! tracking-by-detection tracker (maximum overlap, SORT or DeepSORT style), and removal of
//! stationary tracks. Tracks are then summarised by appearance signatures built from a
//! triplet-trained embedding and linked across cameras by mutual best matches. The
//! [`eval`] module scores results with identity (IDF1/IDP/IDR) and detection metrics.

pub mod error;
pub mod eval;
pub mod geometry;
pub mod io;
pub mod metric;
pub mod mtmc;
pub mod pipeline;
pub mod roi;
pub mod sct;
pub mod simgen;
pub mod types;

pub use error::{Error, Result};
pub use geometry::{centroid, iou, BoundingBox, Point};
pub use roi::{distance_to_roi_border, filter_by_roi, RoiMask};
pub use types::{CameraId, Detection, FeatureVector, Track};
