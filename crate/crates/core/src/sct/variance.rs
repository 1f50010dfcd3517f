//! Removal of near-stationary tracks (e.g. parked vehicles) by centroid variance.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Track;

use super::TrackedObject;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMode {
    /// Filter completed tracks after tracking.
    #[default]
    Post,
    /// Drop a live track from the output once its variance so far falls below threshold.
    Online,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VarianceFilterConfig {
    /// Pixels squared.
    pub variance_threshold: f64,
    /// Tracks shorter than this are never removed.
    pub min_track_length: usize,
    pub mode: VarianceMode,
}

impl Default for VarianceFilterConfig {
    fn default() -> Self {
        Self {
            variance_threshold: 100.0,
            min_track_length: 5,
            mode: VarianceMode::Post,
        }
    }
}

impl VarianceFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.variance_threshold.is_nan() || self.variance_threshold < 0.0 {
            return Err(Error::Config(format!(
                "variance_threshold {} must be non-negative",
                self.variance_threshold
            )));
        }
        Ok(())
    }
}

/// Running centroid statistics (Welford) for one track.
#[derive(Debug, Clone, Copy, Default)]
struct CentroidStats {
    n: usize,
    mean_x: f64,
    mean_y: f64,
    m2_x: f64,
    m2_y: f64,
}

impl CentroidStats {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1;
        let n = self.n as f64;
        let dx = x - self.mean_x;
        self.mean_x += dx / n;
        self.m2_x += dx * (x - self.mean_x);
        let dy = y - self.mean_y;
        self.mean_y += dy / n;
        self.m2_y += dy * (y - self.mean_y);
    }

    /// Mean of the unbiased per-axis sample variances; zero for fewer than two points.
    fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let d = (self.n - 1) as f64;
        (self.m2_x / d + self.m2_y / d) / 2.0
    }
}

/// Mean of the unbiased sample variances of centroid x and y over the track.
pub fn centroid_variance(track: &Track) -> f64 {
    let mut stats = CentroidStats::default();
    for d in track.detections() {
        let c = d.bbox.centroid();
        stats.push(c.x, c.y);
    }
    stats.variance()
}

fn is_stationary(variance: f64, len: usize, cfg: &VarianceFilterConfig) -> bool {
    len >= cfg.min_track_length && variance < cfg.variance_threshold
}

/// Drops tracks that are long enough and whose centroid variance is below the threshold.
pub fn variance_filter(tracks: Vec<Track>, cfg: &VarianceFilterConfig) -> Vec<Track> {
    tracks
        .into_iter()
        .filter(|t| !is_stationary(centroid_variance(t), t.len(), cfg))
        .collect()
}

/// Streaming form: once a track has `min_track_length` outputs with variance below the
/// threshold, it and all its later outputs are suppressed. Earlier outputs stay emitted.
#[derive(Debug, Default)]
pub struct OnlineVarianceFilter {
    cfg: VarianceFilterConfig,
    stats: BTreeMap<i64, CentroidStats>,
    dropped: BTreeSet<i64>,
}

impl OnlineVarianceFilter {
    pub fn new(cfg: VarianceFilterConfig) -> Self {
        Self {
            cfg,
            ..Self::default()
        }
    }

    pub fn process(&mut self, outputs: Vec<TrackedObject>) -> Vec<TrackedObject> {
        outputs
            .into_iter()
            .filter(|o| {
                if self.dropped.contains(&o.track_id) {
                    return false;
                }
                let stats = self.stats.entry(o.track_id).or_default();
                let c = o.bbox.centroid();
                stats.push(c.x, c.y);
                if is_stationary(stats.variance(), stats.n, &self.cfg) {
                    self.dropped.insert(o.track_id);
                    self.stats.remove(&o.track_id);
                    return false;
                }
                true
            })
            .collect()
    }

    pub fn dropped_ids(&self) -> impl Iterator<Item = i64> + '_ {
        self.dropped.iter().copied()
    }
}
