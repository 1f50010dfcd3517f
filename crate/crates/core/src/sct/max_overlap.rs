//! Maximum-overlap tracker: each detection continues the track whose box in the
//! previous frame it overlaps most, provided the overlap clears the IoU gate.

use crate::error::{Error, Result};
use crate::types::{CameraId, Detection, Track};

use super::{FrameTracker, TrackedObject};

/// Greedily extends `live` tracks with `dets` (all from one frame) in descending IoU order
/// and opens a new track for each leftover detection. Ties are broken by lowest
/// `(track_id, detection index)`. Returns the newly opened tracks; `next_id` is advanced.
pub fn max_overlap_step(
    live: &mut [Track],
    dets: &[Detection],
    iou_gate: f64,
    camera: CameraId,
    next_id: &mut i64,
) -> Result<Vec<Track>> {
    let assigned = greedy_pairs(live, dets, iou_gate);
    let mut det_taken = vec![false; dets.len()];
    for &(t, d) in &assigned {
        live[t].push(dets[d].clone())?;
        det_taken[d] = true;
    }
    let mut opened = Vec::new();
    for (d, det) in dets.iter().enumerate() {
        if !det_taken[d] {
            opened.push(Track::new(camera, *next_id, vec![det.clone()])?);
            *next_id += 1;
        }
    }
    Ok(opened)
}

/// `(track index, detection index)` pairs chosen greedily.
fn greedy_pairs(live: &[Track], dets: &[Detection], iou_gate: f64) -> Vec<(usize, usize)> {
    let ious: Vec<Vec<f64>> = live
        .iter()
        .map(|t| dets.iter().map(|d| t.last().bbox.iou(&d.bbox)).collect())
        .collect();
    let ids: Vec<i64> = live.iter().map(Track::track_id).collect();
    greedy_by_overlap(&ious, &ids, iou_gate)
}

/// Greedy one-to-one matching over an IoU matrix (rows = tracks with ids `track_ids`),
/// highest IoU first. Pairs below `iou_gate` or without any overlap are never matched.
pub fn greedy_by_overlap(ious: &[Vec<f64>], track_ids: &[i64], iou_gate: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (t, row) in ious.iter().enumerate() {
        for (d, &iou) in row.iter().enumerate() {
            if iou >= iou_gate && iou > 0.0 {
                candidates.push((iou, t, d));
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| track_ids[a.1].cmp(&track_ids[b.1]))
            .then(a.2.cmp(&b.2))
    });
    let cols = ious.first().map_or(0, Vec::len);
    let mut track_used = vec![false; ious.len()];
    let mut det_used = vec![false; cols];
    let mut pairs = Vec::new();
    for (_, t, d) in candidates {
        if !track_used[t] && !det_used[d] {
            track_used[t] = true;
            det_used[d] = true;
            pairs.push((t, d));
        }
    }
    pairs
}

/// Frame-by-frame driver around [`max_overlap_step`]. A track stays live while its last
/// detection is at most `max_age` frames old.
#[derive(Debug)]
pub struct MaxOverlapTracker {
    camera: CameraId,
    iou_gate: f64,
    max_age: u32,
    live: Vec<Track>,
    next_id: i64,
    last_frame: Option<u32>,
}

impl MaxOverlapTracker {
    pub fn new(camera: CameraId, iou_gate: f64, max_age: u32) -> Self {
        Self {
            camera,
            iou_gate,
            max_age: max_age.max(1),
            live: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }
}

impl FrameTracker for MaxOverlapTracker {
    fn step(&mut self, frame: u32, dets: &[Detection]) -> Result<Vec<TrackedObject>> {
        if let Some(last) = self.last_frame {
            if frame <= last {
                return Err(Error::OutOfOrderFrame { frame, last });
            }
        }
        self.last_frame = Some(frame);
        let max_age = self.max_age;
        self.live.retain(|t| frame - t.last_frame() <= max_age);

        let dets: Vec<Detection> = dets
            .iter()
            .map(|d| Detection { frame, ..d.clone() })
            .collect();
        let assigned = greedy_pairs(&self.live, &dets, self.iou_gate);
        let mut det_track: Vec<Option<usize>> = vec![None; dets.len()];
        for &(t, d) in &assigned {
            det_track[d] = Some(t);
        }
        let opened = max_overlap_step(&mut self.live, &dets, self.iou_gate, self.camera, &mut self.next_id)?;

        let mut opened = opened.into_iter();
        let mut out = Vec::with_capacity(dets.len());
        let mut new_tracks = Vec::new();
        for (d, det) in dets.iter().enumerate() {
            let track_id = match det_track[d] {
                Some(t) => self.live[t].track_id(),
                None => {
                    let t = opened.next().expect("one new track per unmatched detection");
                    let id = t.track_id();
                    new_tracks.push(t);
                    id
                }
            };
            out.push(TrackedObject {
                track_id,
                frame,
                bbox: det.bbox,
                confidence: det.confidence,
                feature: det.feature.clone(),
                detection_index: d,
            });
        }
        self.live.extend(new_tracks);
        out.sort_by_key(|o| o.track_id);
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    fn det(frame: u32, l: f64, t: f64, w: f64, h: f64) -> Detection {
        Detection::new(frame, BoundingBox::new(l, t, w, h).unwrap(), 1.0).unwrap()
    }

    #[test]
    fn cold_start_opens_distinct_tracks() {
        let mut next = 1;
        let dets = vec![det(0, 0.0, 0.0, 5.0, 5.0), det(0, 10.0, 0.0, 5.0, 5.0), det(0, 20.0, 0.0, 5.0, 5.0)];
        let opened = max_overlap_step(&mut [], &dets, 0.5, CameraId(1), &mut next).unwrap();
        let ids: Vec<_> = opened.iter().map(Track::track_id).collect();
        assert_eq!(ids, vec![1, 2, 3]);
    }

    #[test]
    fn identical_box_is_appended() {
        let mut live = vec![Track::new(CameraId(1), 7, vec![det(0, 1.0, 1.0, 4.0, 4.0)]).unwrap()];
        let mut next = 8;
        let opened = max_overlap_step(&mut live, &[det(1, 1.0, 1.0, 4.0, 4.0)], 0.5, CameraId(1), &mut next).unwrap();
        assert!(opened.is_empty());
        assert_eq!(live[0].len(), 2);
    }

    #[test]
    fn greedy_matches_exhaustive_best_on_crossed_ious() {
        let ious = vec![vec![0.8, 0.6], vec![0.0, 0.7]];
        let pairs = greedy_by_overlap(&ious, &[1, 2], 0.5);
        assert_eq!(pairs, vec![(0, 0), (1, 1)]);
        // exhaustive enumeration of full matchings: the straight one has the larger total IoU
        let straight = ious[0][0] + ious[1][1];
        let swapped = ious[0][1] + ious[1][0];
        assert!(straight > swapped);
    }

    #[test]
    fn greedy_tie_break_prefers_lower_track_id() {
        let ious = vec![vec![0.9], vec![0.9]];
        assert_eq!(greedy_by_overlap(&ious, &[5, 3], 0.5), vec![(1, 0)]);
    }

    #[test]
    fn geometric_crossing_follows_overlap() {
        let mut live = vec![
            Track::new(CameraId(1), 1, vec![det(0, 0.0, 0.0, 10.0, 10.0)]).unwrap(),
            Track::new(CameraId(1), 2, vec![det(0, 5.0, 0.0, 10.0, 10.0)]).unwrap(),
        ];
        // d0 sits on t2's box, d1 on t1's box
        let dets = vec![det(1, 5.0, 0.0, 10.0, 10.0), det(1, 0.0, 0.0, 10.0, 10.0)];
        let mut next = 3;
        let opened = max_overlap_step(&mut live, &dets, 0.5, CameraId(1), &mut next).unwrap();
        assert!(opened.is_empty());
        assert_eq!(live[0].last().bbox, dets[1].bbox);
        assert_eq!(live[1].last().bbox, dets[0].bbox);
    }

    #[test]
    fn below_gate_opens_new_track() {
        let mut live = vec![Track::new(CameraId(1), 1, vec![det(0, 0.0, 0.0, 10.0, 10.0)]).unwrap()];
        let mut next = 2;
        let opened = max_overlap_step(&mut live, &[det(1, 6.0, 0.0, 10.0, 10.0)], 0.5, CameraId(1), &mut next).unwrap();
        assert_eq!(opened.len(), 1);
        assert_eq!(opened[0].track_id(), 2);
        assert_eq!(next, 3);
    }

    #[test]
    fn tracker_drops_tracks_after_gap() {
        let mut tr = MaxOverlapTracker::new(CameraId(1), 0.5, 1);
        let a = tr.step(0, &[det(0, 0.0, 0.0, 10.0, 10.0)]).unwrap();
        let b = tr.step(2, &[det(2, 0.0, 0.0, 10.0, 10.0)]).unwrap();
        assert_ne!(a[0].track_id, b[0].track_id);
        assert!(tr.step(2, &[]).is_err());
    }
}
