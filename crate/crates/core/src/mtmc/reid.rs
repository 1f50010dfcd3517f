use std::collections::BTreeMap;

use super::signature::{build_signature, mean, signature_distance, TrackSignature};
use crate::error::{Error, Result};
use crate::io::MtmcRecord;
use crate::metric::EmbeddingModel;
use crate::types::{CameraId, Track};

/// Index of the smallest value, lowest index on ties. `None` for an empty slice.
fn argmin(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Mutual-best pairs of a distance matrix (`dist[i][j]` between row item `i` and column
/// item `j`) whose distance is at most `max_dist`, ordered by row. Nearest-neighbour ties
/// go to the lowest index.
pub fn mutual_best_pairs(dist: &[Vec<f64>], max_dist: f64) -> Vec<(usize, usize)> {
    let cols = dist.first().map_or(0, Vec::len);
    if cols == 0 {
        return Vec::new();
    }
    let col_best: Vec<usize> = (0..cols)
        .map(|j| argmin(dist.iter().map(|row| row[j])).expect("non-empty rows"))
        .collect();
    dist.iter()
        .enumerate()
        .filter_map(|(i, row)| {
            let j = argmin(row.iter().copied())?;
            (col_best[j] == i && row[j] <= max_dist).then_some((i, j))
        })
        .collect()
}

/// Pairs `(a, b)` where each is the other's nearest signature and their distance is at most
/// `max_dist`.
pub fn cross_match(set_a: &[TrackSignature], set_b: &[TrackSignature], max_dist: f64) -> Result<Vec<(usize, usize)>> {
    let dist = set_a
        .iter()
        .map(|a| {
            set_b
                .iter()
                .map(|b| signature_distance(a, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mutual_best_pairs(&dist, max_dist))
}

/// Mapping from `(camera, local track id)` to a global identity numbered from 1.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalIdMap {
    ids: BTreeMap<(CameraId, i64), i64>,
}

impl GlobalIdMap {
    pub fn get(&self, camera: CameraId, track_id: i64) -> Option<i64> {
        self.ids.get(&(camera, track_id)).copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn global_count(&self) -> usize {
        self.ids.values().max().map_or(0, |&m| m as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = (CameraId, i64, i64)> + '_ {
        self.ids.iter().map(|(&(c, t), &g)| (c, t, g))
    }
}

struct GlobalEntry {
    id: i64,
    members: Vec<Vec<f64>>,
    signature: TrackSignature,
}

/// Merges cameras one at a time into a growing global set. Camera order is the order of
/// `per_camera`. A matched track joins the existing identity, whose summary becomes the mean
/// of its members' summaries; unmatched tracks open new identities.
pub fn sequential_reid_signatures(per_camera: &[Vec<TrackSignature>], max_dist: f64) -> Result<GlobalIdMap> {
    if max_dist.is_nan() {
        return Err(Error::InvalidValue("max_dist is NaN".into()));
    }
    let mut map = GlobalIdMap::default();
    let mut global: Vec<GlobalEntry> = Vec::new();
    for (step, camera_set) in per_camera.iter().enumerate() {
        let matched: BTreeMap<usize, usize> = if step == 0 {
            BTreeMap::new()
        } else {
            let reps: Vec<TrackSignature> = global.iter().map(|g| g.signature.clone()).collect();
            cross_match(&reps, camera_set, max_dist)?
                .into_iter()
                .map(|(g, t)| (t, g))
                .collect()
        };
        for (t, sig) in camera_set.iter().enumerate() {
            let key = (sig.camera, sig.track_id);
            if map.ids.contains_key(&key) {
                return Err(Error::InvalidValue(format!(
                    "track {} of camera {} appears twice",
                    sig.track_id, sig.camera
                )));
            }
            match matched.get(&t) {
                Some(&g) => {
                    let entry = &mut global[g];
                    entry.members.push(sig.summary.clone());
                    entry.signature.summary = mean(&entry.members);
                    map.ids.insert(key, entry.id);
                }
                None => {
                    let id = global.len() as i64 + 1;
                    global.push(GlobalEntry {
                        id,
                        members: vec![sig.summary.clone()],
                        signature: sig.clone(),
                    });
                    map.ids.insert(key, id);
                }
            }
        }
        log::debug!(
            "re-id step {step}: {} tracks, {} merged, {} global identities",
            camera_set.len(),
            matched.len(),
            global.len()
        );
    }
    Ok(map)
}

/// Builds signatures for every track and runs [`sequential_reid_signatures`].
pub fn sequential_reid(per_camera_tracks: &[Vec<Track>], model: &EmbeddingModel, max_dist: f64) -> Result<GlobalIdMap> {
    let sigs = per_camera_tracks
        .iter()
        .map(|tracks| tracks.iter().map(|t| build_signature(t, model)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    sequential_reid_signatures(&sigs, max_dist)
}

/// One output row per track detection, ordered by camera, frame, then global id.
pub fn mtmc_records(per_camera_tracks: &[Vec<Track>], map: &GlobalIdMap) -> Result<Vec<MtmcRecord>> {
    let mut rows = Vec::new();
    for t in per_camera_tracks.iter().flatten() {
        let gid = map.get(t.camera(), t.track_id()).ok_or_else(|| {
            Error::InvalidValue(format!(
                "track {} of camera {} has no global id",
                t.track_id(),
                t.camera()
            ))
        })?;
        rows.extend(t.detections().iter().map(|d| MtmcRecord {
            camera: t.camera(),
            global_id: gid,
            frame: d.frame,
            bbox: d.bbox,
        }));
    }
    rows.sort_by_key(|r| (r.camera, r.frame, r.global_id));
    Ok(rows)
}
