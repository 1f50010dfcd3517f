//! Identity measures (IDF1/IDP/IDR), detection precision/recall, AP at IoU 0.5 and the
//! per-sequence report.

mod ap;
mod detection;
mod idm;
mod report;

use crate::geometry::BoundingBox;
use crate::io::{MotRecord, MtmcRecord};
use crate::types::CameraId;

pub use ap::{ap_at_05, ScoredBox};
pub use detection::{detection_pr, DetectionCounts};
pub use idm::{id_measures, IdCounts};
pub use report::{evaluate, format_report_table, parse_report, write_report, EvalReport, EvalSummary};

/// IoU threshold used by every measure in this module unless stated otherwise.
pub const IOU_THRESHOLD: f64 = 0.5;

/// Frames are matched per `(camera, frame)`; single-camera data uses one camera id throughout.
pub type FrameKey = (CameraId, u32);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityBox {
    pub camera: CameraId,
    pub frame: u32,
    pub id: i64,
    pub bbox: BoundingBox,
}

impl IdentityBox {
    pub fn key(&self) -> FrameKey {
        (self.camera, self.frame)
    }
}

pub fn boxes_from_mot(camera: CameraId, records: &[MotRecord]) -> Vec<IdentityBox> {
    records
        .iter()
        .map(|r| IdentityBox {
            camera,
            frame: r.frame,
            id: r.id,
            bbox: r.bbox,
        })
        .collect()
}

pub fn boxes_from_mtmc(records: &[MtmcRecord]) -> Vec<IdentityBox> {
    records
        .iter()
        .map(|r| IdentityBox {
            camera: r.camera,
            frame: r.frame,
            id: r.global_id,
            bbox: r.bbox,
        })
        .collect()
}

/// `num / den`, or `empty` when the denominator is zero.
pub(crate) fn ratio(num: usize, den: usize, empty: f64) -> f64 {
    if den == 0 {
        empty
    } else {
        num as f64 / den as f64
    }
}
