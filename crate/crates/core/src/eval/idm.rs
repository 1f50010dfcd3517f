use std::collections::BTreeMap;

use super::{ratio, FrameKey, IdentityBox};
use crate::sct::hungarian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct IdCounts {
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

impl IdCounts {
    /// `2 idtp / (2 idtp + idfp + idfn)`; 1 when both sides are empty.
    pub fn idf1(&self) -> f64 {
        ratio(2 * self.idtp, 2 * self.idtp + self.idfp + self.idfn, 1.0)
    }

    /// 1 when there are no predictions.
    pub fn idp(&self) -> f64 {
        ratio(self.idtp, self.idtp + self.idfp, 1.0)
    }

    /// 1 when there is no ground truth.
    pub fn idr(&self) -> f64 {
        ratio(self.idtp, self.idtp + self.idfn, 1.0)
    }
}

/// Per identity pair, the number of frames where the two boxes overlap with IoU at or
/// above the threshold. Returns `(gt ids, pred ids, gt sizes, pred sizes, matches)`.
#[allow(clippy::type_complexity)]
pub(crate) fn pair_matches(
    gt: &[IdentityBox],
    pred: &[IdentityBox],
    iou_threshold: f64,
) -> (Vec<i64>, Vec<i64>, Vec<usize>, Vec<usize>, Vec<Vec<usize>>) {
    let index = |boxes: &[IdentityBox]| -> BTreeMap<i64, usize> {
        let mut ids: Vec<i64> = boxes.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    };
    let (gi, pi) = (index(gt), index(pred));
    let mut gn = vec![0usize; gi.len()];
    let mut pn = vec![0usize; pi.len()];
    gt.iter().for_each(|b| gn[gi[&b.id]] += 1);
    pred.iter().for_each(|b| pn[pi[&b.id]] += 1);

    let mut pred_by_key: BTreeMap<FrameKey, Vec<&IdentityBox>> = BTreeMap::new();
    for b in pred {
        pred_by_key.entry(b.key()).or_default().push(b);
    }
    let mut m = vec![vec![0usize; pi.len()]; gi.len()];
    for g in gt {
        for p in pred_by_key.get(&g.key()).into_iter().flatten() {
            if g.bbox.iou(&p.bbox) >= iou_threshold {
                m[gi[&g.id]][pi[&p.id]] += 1;
            }
        }
    }
    (gi.into_keys().collect(), pi.into_keys().collect(), gn, pn, m)
}

/// Identity measures under the optimal one-to-one truth-to-result identity matching.
///
/// The matching minimises total identity errors over the augmented `(T+C) x (T+C)` cost
/// matrix: a real pair costs its unmatched frames on both sides, a truth identity left
/// unmatched costs all its frames as misses, and an unmatched result identity costs all its
/// frames as false positives.
pub fn id_measures(gt: &[IdentityBox], pred: &[IdentityBox], iou_threshold: f64) -> IdCounts {
    let (gids, pids, gn, pn, m) = pair_matches(gt, pred, iou_threshold);
    let (t, c) = (gids.len(), pids.len());
    let n = t + c;
    let mut cost = vec![vec![f64::INFINITY; n]; n];
    for i in 0..t {
        for j in 0..c {
            cost[i][j] = (gn[i] + pn[j] - 2 * m[i][j]) as f64;
        }
        cost[i][c + i] = gn[i] as f64;
    }
    for j in 0..c {
        cost[t + j][j] = pn[j] as f64;
        for i in 0..t {
            cost[t + j][c + i] = 0.0;
        }
    }
    let idtp: usize = hungarian(&cost)
        .into_iter()
        .filter(|&(i, j)| i < t && j < c)
        .map(|(i, j)| m[i][j])
        .sum();
    IdCounts {
        idtp,
        idfp: pred.len() - idtp,
        idfn: gt.len() - idtp,
    }
}
