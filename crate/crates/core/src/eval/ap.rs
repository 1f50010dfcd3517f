use std::collections::BTreeMap;

use super::{FrameKey, IdentityBox};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox {
    pub key: FrameKey,
    pub bbox: BoundingBox,
    pub score: f64,
}

const RECALL_POINTS: usize = 101;

/// Average precision at IoU 0.5 with 101-point interpolation.
///
/// Detections are ranked by descending score (input order breaks ties). Each one claims the
/// unclaimed ground-truth box in its frame with the highest IoU at or above 0.5. Precision is
/// interpolated as the best precision at any recall at or above each of the points
/// `0, 0.01, ..., 1`. With no ground truth the result is 1 if there are no detections and 0
/// otherwise.
pub fn ap_at_05(gt: &[IdentityBox], dets: &[ScoredBox]) -> f64 {
    let n_gt = gt.len();
    if n_gt == 0 {
        return if dets.is_empty() { 1.0 } else { 0.0 };
    }
    let mut gt_by_key: BTreeMap<FrameKey, Vec<(BoundingBox, bool)>> = BTreeMap::new();
    for g in gt {
        gt_by_key.entry(g.key()).or_default().push((g.bbox, false));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));

    // (true positives so far, precision) after each ranked detection
    let mut curve: Vec<(usize, f64)> = Vec::with_capacity(dets.len());
    let mut tp = 0usize;
    for (rank, &d) in order.iter().enumerate() {
        let det = &dets[d];
        if let Some(cands) = gt_by_key.get_mut(&det.key) {
            let best = cands
                .iter()
                .enumerate()
                .filter(|(_, (_, used))| !used)
                .map(|(i, (g, _))| (i, g.iou(&det.bbox)))
                .filter(|&(_, v)| v >= 0.5)
                .fold(None::<(usize, f64)>, |acc, (i, v)| match acc {
                    Some((_, bv)) if bv >= v => acc,
                    _ => Some((i, v)),
                });
            if let Some((i, _)) = best {
                cands[i].1 = true;
                tp += 1;
            }
        }
        curve.push((tp, tp as f64 / (rank + 1) as f64));
    }

    // precision envelope from the right
    let mut envelope = vec![0.0; curve.len()];
    let mut best = 0.0f64;
    for i in (0..curve.len()).rev() {
        best = best.max(curve[i].1);
        envelope[i] = best;
    }
    let mut sum = 0.0;
    let mut idx = 0;
    for k in 0..RECALL_POINTS {
        // first rank whose recall tp/n_gt reaches k/100, compared exactly in integers
        while idx < curve.len() && curve[idx].0 * (RECALL_POINTS - 1) < k * n_gt {
            idx += 1;
        }
        if idx == curve.len() {
            break;
        }
        sum += envelope[idx];
    }
    sum / RECALL_POINTS as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::CameraId;

    fn g(frame: u32, x: f64) -> IdentityBox {
        IdentityBox {
            camera: CameraId(1),
            frame,
            id: 1,
            bbox: BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap(),
        }
    }

    fn d(frame: u32, x: f64, score: f64) -> ScoredBox {
        ScoredBox {
            key: (CameraId(1), frame),
            bbox: BoundingBox::new(x, 0.0, 10.0, 10.0).unwrap(),
            score,
        }
    }

    #[test]
    fn perfect_detections() {
        let gt = [g(0, 0.0), g(1, 30.0), g(1, 60.0)];
        let dets = [d(0, 0.0, 0.1), d(1, 30.0, 0.9), d(1, 60.0, 0.4)];
        assert_eq!(ap_at_05(&gt, &dets), 1.0);
    }

    #[test]
    fn disjoint_detections() {
        let gt = [g(0, 0.0)];
        assert_eq!(ap_at_05(&gt, &[d(0, 100.0, 0.9), d(1, 0.0, 0.8)]), 0.0);
    }

    #[test]
    fn false_positive_between_two_hits() {
        let gt = [g(0, 0.0), g(0, 40.0)];
        let dets = [d(0, 0.0, 0.9), d(0, 200.0, 0.8), d(0, 40.0, 0.7)];
        // staircase: (r=0.5, p=1), (0.5, 1/2), (1, 2/3): points 0..=50 get 1, 51..=100 get 2/3
        let expected = (51.0 + 50.0 * (2.0 / 3.0)) / 101.0;
        assert!((ap_at_05(&gt, &dets) - expected).abs() < 1e-12);
    }

    #[test]
    fn monotone_rescoring_is_invariant() {
        let gt = [g(0, 0.0), g(0, 40.0), g(1, 0.0)];
        let dets = [d(0, 0.0, 0.3), d(0, 200.0, 0.8), d(0, 41.0, 0.7), d(1, 2.0, 0.1)];
        let rescored: Vec<_> = dets.iter().map(|s| ScoredBox { score: (5.0 * s.score).exp(), ..*s }).collect();
        assert_eq!(ap_at_05(&gt, &dets), ap_at_05(&gt, &rescored));
    }
}
