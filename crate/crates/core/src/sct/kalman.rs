//! Constant-velocity Kalman filter over `(cx, cy, s, r, vcx, vcy, vs)`, where `s` is the box
//! area and `r` the aspect ratio (held constant). Noise standard deviations scale with the
//! current box height.

use nalgebra::{SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub type StateVector = SVector<f64, 7>;
pub type StateCovariance = SMatrix<f64, 7, 7>;
type Measurement = SVector<f64, 4>;

/// Smallest area a predicted state may have before it is clamped and flagged.
pub const MIN_AREA: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    /// Process noise on position, as a fraction of box height.
    pub std_weight_position: f64,
    /// Process noise on velocity, as a fraction of box height.
    pub std_weight_velocity: f64,
    /// Measurement noise, as a fraction of box height.
    pub std_weight_measurement: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            std_weight_position: 1.0 / 20.0,
            std_weight_velocity: 1.0 / 160.0,
            std_weight_measurement: 1.0 / 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanTrackState {
    pub mean: StateVector,
    pub covariance: StateCovariance,
    pub time_since_update: u32,
    pub hits: u32,
    pub hit_streak: u32,
    pub age: u32,
    /// Set when a prediction produced a non-positive area; such tracks should be dropped.
    pub degenerate: bool,
}

fn measurement_of(b: &BoundingBox) -> Measurement {
    let c = b.centroid();
    Measurement::new(c.x, c.y, b.area(), b.aspect_ratio())
}

fn transition() -> StateCovariance {
    let mut f = StateCovariance::identity();
    f[(0, 4)] = 1.0;
    f[(1, 5)] = 1.0;
    f[(2, 6)] = 1.0;
    f
}

fn observation() -> SMatrix<f64, 4, 7> {
    SMatrix::<f64, 4, 7>::from_fn(|r, c| if r == c { 1.0 } else { 0.0 })
}

impl KalmanTrackState {
    /// Starts a track at `bbox` with zero velocity.
    pub fn initiate(bbox: &BoundingBox, cfg: &KalmanConfig) -> Self {
        let z = measurement_of(bbox);
        let mut mean = StateVector::zeros();
        mean.fixed_rows_mut::<4>(0).copy_from(&z);
        let h = bbox.height();
        let (s, r) = (z[2], z[3]);
        let (wp, wv) = (cfg.std_weight_position, cfg.std_weight_velocity);
        let std = [
            2.0 * wp * h,
            2.0 * wp * h,
            4.0 * wp * s,
            2.0 * cfg.std_weight_measurement * r,
            10.0 * wv * h,
            10.0 * wv * h,
            20.0 * wv * s,
        ];
        Self {
            mean,
            covariance: StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| std[i] * std[i])),
            time_since_update: 0,
            hits: 1,
            hit_streak: 1,
            age: 0,
            degenerate: false,
        }
    }

    fn height(&self) -> f64 {
        let s = self.mean[2].max(MIN_AREA);
        let r = self.mean[3].max(1e-6);
        (s / r).sqrt()
    }

    pub fn process_noise(&self, cfg: &KalmanConfig) -> StateCovariance {
        let h = self.height();
        let s = self.mean[2].max(MIN_AREA);
        let r = self.mean[3];
        let (wp, wv) = (cfg.std_weight_position, cfg.std_weight_velocity);
        let std = [wp * h, wp * h, 2.0 * wp * s, 1e-2 * r, wv * h, wv * h, 2.0 * wv * s];
        StateCovariance::from_diagonal(&StateVector::from_fn(|i, _| std[i] * std[i]))
    }

    pub fn measurement_noise(&self, cfg: &KalmanConfig) -> SMatrix<f64, 4, 4> {
        let h = self.height();
        let s = self.mean[2].max(MIN_AREA);
        let r = self.mean[3];
        let w = cfg.std_weight_measurement;
        let std = [w * h, w * h, 2.0 * w * s, w * r];
        SMatrix::<f64, 4, 4>::from_diagonal(&SVector::<f64, 4>::from_fn(|i, _| std[i] * std[i]))
    }

    /// Advances the state one frame under the constant-velocity model.
    pub fn predict(&self, cfg: &KalmanConfig) -> Self {
        let f = transition();
        let q = self.process_noise(cfg);
        let mut next = self.clone();
        next.mean = f * self.mean;
        next.covariance = symmetrize(f * self.covariance * f.transpose() + q);
        if next.mean[2].is_nan() || next.mean[2] <= 0.0 {
            next.mean[2] = MIN_AREA;
            next.degenerate = true;
        }
        next.age += 1;
        if next.time_since_update > 0 {
            next.hit_streak = 0;
        }
        next.time_since_update += 1;
        next
    }

    /// Corrects the state with an observed box.
    pub fn update(&self, obs: &BoundingBox, cfg: &KalmanConfig) -> Result<Self> {
        let z = measurement_of(obs);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite observation {obs:?}")));
        }
        let h = observation();
        let r = self.measurement_noise(cfg);
        let p = &self.covariance;
        let innovation_cov = h * p * h.transpose() + r;
        let inv = innovation_cov
            .try_inverse()
            .ok_or_else(|| Error::InvalidValue("singular innovation covariance".into()))?;
        let gain = p * h.transpose() * inv;
        let innovation = z - h * self.mean;
        let i_kh = StateCovariance::identity() - gain * h;
        let mut next = self.clone();
        next.mean = self.mean + gain * innovation;
        // Joseph form keeps the covariance positive semi-definite.
        next.covariance = symmetrize(i_kh * p * i_kh.transpose() + gain * r * gain.transpose());
        next.time_since_update = 0;
        next.hits += 1;
        next.hit_streak += 1;
        Ok(next)
    }

    /// Box described by the current state. Area and ratio are clamped to stay positive.
    pub fn bbox(&self) -> BoundingBox {
        let s = self.mean[2].max(MIN_AREA);
        let r = self.mean[3].max(1e-6);
        BoundingBox::from_center_area_ratio(self.mean[0], self.mean[1], s, r)
            .expect("clamped state always yields a valid box")
    }

    pub fn velocity(&self) -> (f64, f64) {
        (self.mean[4], self.mean[5])
    }
}

fn symmetrize(m: StateCovariance) -> StateCovariance {
    (m + m.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx - w / 2.0, cy - h / 2.0, w, h).unwrap()
    }

    fn state_with_mean(values: [f64; 7]) -> KalmanTrackState {
        let mut s = KalmanTrackState::initiate(&bb(0.0, 0.0, 10.0, 10.0), &KalmanConfig::default());
        s.mean = StateVector::from_column_slice(&values);
        s
    }

    fn is_psd(m: &StateCovariance) -> bool {
        let sym = (m - m.transpose()).abs().max() <= 1e-8;
        sym && m.symmetric_eigenvalues().iter().all(|&e| e >= -1e-8)
    }

    #[test]
    fn predict_linear_transition() {
        let cfg = KalmanConfig::default();
        let s = state_with_mean([0.0, 0.0, 100.0, 1.0, 2.0, 3.0, 0.0]).predict(&cfg);
        assert_eq!(s.mean.as_slice(), &[2.0, 3.0, 100.0, 1.0, 2.0, 3.0, 0.0]);
        assert_eq!(s.time_since_update, 1);
        let still = state_with_mean([5.0, 6.0, 100.0, 1.0, 0.0, 0.0, 0.0]).predict(&cfg);
        assert_eq!((still.mean[0], still.mean[1]), (5.0, 6.0));
    }

    #[test]
    fn predict_increases_trace() {
        let cfg = KalmanConfig::default();
        let s = KalmanTrackState::initiate(&bb(50.0, 50.0, 20.0, 40.0), &cfg);
        let p = s.predict(&cfg);
        // F P F^T adds velocity variance to position terms; Q adds a strictly positive diagonal.
        let f = transition();
        let expected = (f * s.covariance * f.transpose() + s.process_noise(&cfg)).trace();
        assert!((p.covariance.trace() - expected).abs() < 1e-9 * expected);
        assert!(p.covariance.trace() > s.covariance.trace());
        assert!(is_psd(&p.covariance));
    }

    #[test]
    fn negative_area_prediction_is_flagged() {
        let cfg = KalmanConfig::default();
        let s = state_with_mean([0.0, 0.0, 10.0, 1.0, 0.0, 0.0, -20.0]).predict(&cfg);
        assert!(s.degenerate);
        assert_eq!(s.mean[2], MIN_AREA);
        assert!(s.bbox().area() > 0.0);
    }

    #[test]
    fn update_with_consistent_measurement() {
        let cfg = KalmanConfig {
            std_weight_measurement: 1e-9,
            ..KalmanConfig::default()
        };
        let s = KalmanTrackState::initiate(&bb(40.0, 30.0, 20.0, 10.0), &cfg).predict(&cfg);
        let obs = bb(43.0, 29.0, 21.0, 10.5);
        let u = s.update(&obs, &cfg).unwrap();
        let c = obs.centroid();
        assert!((u.mean[0] - c.x).abs() < 1e-6);
        assert!((u.mean[1] - c.y).abs() < 1e-6);
        assert!((u.mean[2] - obs.area()).abs() < 1e-6);
        assert_eq!(u.time_since_update, 0);
        assert_eq!(u.hits, 2);
    }

    #[test]
    fn posterior_covariance_shrinks_in_observed_subspace() {
        let cfg = KalmanConfig::default();
        let prior = KalmanTrackState::initiate(&bb(40.0, 30.0, 20.0, 10.0), &cfg).predict(&cfg);
        let post = prior.update(&bb(41.0, 30.0, 20.0, 10.0), &cfg).unwrap();
        let h = observation();
        let diff = h * prior.covariance * h.transpose() - h * post.covariance * h.transpose();
        assert!(diff.symmetric_eigenvalues().iter().all(|&e| e >= -1e-9));
        assert!(is_psd(&post.covariance));
    }

    #[test]
    fn tracks_constant_velocity_target() {
        let cfg = KalmanConfig::default();
        let (vx, vy) = (4.0, -1.5);
        let mut s = KalmanTrackState::initiate(&bb(100.0, 200.0, 60.0, 40.0), &cfg);
        for t in 1..=20 {
            s = s.predict(&cfg);
            let obs = bb(100.0 + vx * t as f64, 200.0 + vy * t as f64, 60.0, 40.0);
            s = s.update(&obs, &cfg).unwrap();
            assert!(is_psd(&s.covariance));
        }
        let (ex, ey) = s.velocity();
        assert!((ex - vx).abs() <= 0.05 * vx.abs(), "vx {ex}");
        assert!((ey - vy).abs() <= 0.05 * vy.abs(), "vy {ey}");
    }

    #[test]
    fn lifecycle_counters() {
        let cfg = KalmanConfig::default();
        let s = KalmanTrackState::initiate(&bb(0.0, 0.0, 4.0, 4.0), &cfg);
        let s = s.predict(&cfg);
        assert_eq!((s.age, s.time_since_update, s.hit_streak), (1, 1, 1));
        let s = s.predict(&cfg);
        assert_eq!((s.time_since_update, s.hit_streak), (2, 0));
        let s = s.update(&bb(0.0, 0.0, 4.0, 4.0), &cfg).unwrap();
        assert_eq!((s.time_since_update, s.hit_streak, s.hits), (0, 1, 2));
    }
}
