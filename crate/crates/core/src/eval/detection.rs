use std::collections::BTreeMap;

use super::{ratio, FrameKey, IdentityBox};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl DetectionCounts {
    /// 1 when there are no predictions.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp, 1.0)
    }

    /// 1 when there is no ground truth.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_, 1.0)
    }
}

/// Greedy one-to-one matching inside one frame: pairs taken by descending IoU (ties by gt
/// index, then prediction index), only pairs at or above the threshold. Returns the matched
/// `(gt, pred)` index pairs.
pub(crate) fn greedy_match(gt: &[BoundingBox], pred: &[BoundingBox], iou_threshold: f64) -> Vec<(usize, usize)> {
    let mut cand: Vec<(f64, usize, usize)> = Vec::new();
    for (i, g) in gt.iter().enumerate() {
        for (j, p) in pred.iter().enumerate() {
            let v = g.iou(p);
            if v >= iou_threshold && v > 0.0 {
                cand.push((v, i, j));
            }
        }
    }
    cand.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let (mut used_g, mut used_p) = (vec![false; gt.len()], vec![false; pred.len()]);
    let mut out = Vec::new();
    for (_, i, j) in cand {
        if !used_g[i] && !used_p[j] {
            used_g[i] = true;
            used_p[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn by_key(boxes: &[IdentityBox]) -> BTreeMap<FrameKey, Vec<BoundingBox>> {
    let mut out: BTreeMap<FrameKey, Vec<BoundingBox>> = BTreeMap::new();
    for b in boxes {
        out.entry(b.key()).or_default().push(b.bbox);
    }
    out
}

/// Detection-level counts, ignoring identities.
pub fn detection_pr(gt: &[IdentityBox], pred: &[IdentityBox], iou_threshold: f64) -> DetectionCounts {
    let (g, p) = (by_key(gt), by_key(pred));
    let tp: usize = g
        .iter()
        .filter_map(|(k, gb)| p.get(k).map(|pb| greedy_match(gb, pb, iou_threshold).len()))
        .sum();
    DetectionCounts {
        tp,
        fp: pred.len() - tp,
        fn_: gt.len() - tp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CameraId;

    fn b(frame: u32, x: f64, y: f64) -> IdentityBox {
        IdentityBox {
            camera: CameraId(1),
            frame,
            id: -1,
            bbox: BoundingBox::new(x, y, 10.0, 10.0).unwrap(),
        }
    }

    #[test]
    fn identical_sets() {
        let gt: Vec<_> = (0..4).map(|f| b(f, 5.0, 5.0)).collect();
        let c = detection_pr(&gt, &gt, 0.5);
        assert_eq!((c.precision(), c.recall()), (1.0, 1.0));
    }

    #[test]
    fn one_spurious_among_nine() {
        let gt: Vec<_> = (0..9).map(|i| b(0, 20.0 * i as f64, 0.0)).collect();
        let mut pred = gt.clone();
        pred.push(b(0, 500.0, 500.0));
        let c = detection_pr(&gt, &pred, 0.5);
        assert!((c.precision() - 0.9).abs() < 1e-15);
        assert_eq!(c.recall(), 1.0);
    }

    #[test]
    fn no_predictions() {
        let c = detection_pr(&[b(0, 0.0, 0.0)], &[], 0.5);
        assert_eq!((c.precision(), c.recall()), (1.0, 0.0));
    }

    #[test]
    fn greedy_takes_highest_iou_first() {
        let gt = [BoundingBox::new(0.0, 0.0, 10.0, 10.0).unwrap(), BoundingBox::new(3.0, 0.0, 10.0, 10.0).unwrap()];
        let pred = [BoundingBox::new(2.0, 0.0, 10.0, 10.0).unwrap()];
        // pred overlaps gt[1] more (offset 1 vs 2)
        assert_eq!(greedy_match(&gt, &pred, 0.5), vec![(1, 0)]);
    }
}
