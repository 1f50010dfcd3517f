//! Synthetic multi-camera scenarios with known ground truth.
//!
//! Each camera sees a 960x600 scene:
//!
//! - a clutter band at the top (y < 100), outside the region of interest;
//! - seven horizontal lanes (centres at y = 170 + 52k) where moving vehicles drive in one
//!   direction across the frame, growing from 0.8x to 1.2x their base size;
//! - a parking strip at the bottom (y >= 540) holding stationary vehicles.
//!
//! Vehicles in one lane never overlap in time. Ground truth contains only the moving lane
//! vehicles; parked and clutter objects are detected but excluded, and listed in the
//! manifest instead. Appearance features are Gaussian samples around one cluster centre per
//! identity, with centres at least `feature_separation` apart.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::io::{self, FeatureRecord, MotRecord, MtmcRecord};
use crate::roi::RoiMask;
use crate::types::{CameraId, FeatureVector};

pub const IMAGE_WIDTH: usize = 960;
pub const IMAGE_HEIGHT: usize = 600;
/// First image row inside the region of interest.
pub const ROI_TOP: usize = 110;
const LANES: usize = 7;
const LANE_FIRST_CENTRE: f64 = 170.0;
const LANE_SPACING: f64 = 52.0;
const CLUTTER_CENTRE: f64 = 50.0;
const PARKING_TOP: f64 = 540.0;
const PARKING_SLOT: f64 = 110.0;
const EDGE_MARGIN: f64 = 10.0;
/// Frames left empty in a lane between two vehicles.
const LANE_GAP: u32 = 15;
const MAX_FEATURE_TRIES: usize = 10_000;

/// Seed offset for the independent training split.
const TRAIN_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub cameras: usize,
    pub vehicles: usize,
    /// Probability that a vehicle passes a given camera (every vehicle visits at least one).
    pub visit_probability: f64,
    /// Per-coordinate standard deviation of detection box noise, pixels.
    pub noise_std: f64,
    pub miss_rate: f64,
    /// Expected spurious detections per frame.
    pub spurious_rate: f64,
    pub parked_per_camera: usize,
    pub clutter_per_camera: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub feature_dim: usize,
    /// RMS distance of a feature sample from its identity's centre.
    pub feature_spread: f64,
    /// Minimum distance between identity centres.
    pub feature_separation: f64,
    /// Moving vehicles in the independent training split; 0 disables it.
    pub train_vehicles: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            cameras: 3,
            vehicles: 10,
            visit_probability: 0.7,
            noise_std: 1.0,
            miss_rate: 0.05,
            spurious_rate: 0.0,
            parked_per_camera: 0,
            clutter_per_camera: 0,
            speed_min: 3.0,
            speed_max: 7.0,
            feature_dim: 32,
            feature_spread: 1.0,
            feature_separation: 5.0,
            train_vehicles: 30,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.cameras == 0 || self.vehicles == 0 {
            return bad("cameras and vehicles must both be at least 1".into());
        }
        if self.cameras > 999 {
            return bad(format!("at most 999 cameras are supported, got {}", self.cameras));
        }
        for (name, p) in [("visit_probability", self.visit_probability), ("miss_rate", self.miss_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must be in [0, 1], got {p}"));
            }
        }
        if self.miss_rate >= 1.0 {
            return bad("miss_rate 1 would produce no detections".into());
        }
        for (name, v) in [
            ("noise_std", self.noise_std),
            ("spurious_rate", self.spurious_rate),
            ("feature_spread", self.feature_spread),
            ("feature_separation", self.feature_separation),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min && self.speed_max <= 40.0) {
            return bad(format!(
                "speeds must satisfy 0 < speed_min <= speed_max <= 40, got {}..{}",
                self.speed_min, self.speed_max
            ));
        }
        if self.feature_dim < 2 {
            return bad("feature_dim must be at least 2".into());
        }
        let slots = ((IMAGE_WIDTH as f64 - 2.0 * EDGE_MARGIN) / PARKING_SLOT) as usize;
        if self.parked_per_camera > slots {
            return bad(format!("at most {slots} parked vehicles fit per camera"));
        }
        Ok(())
    }

    fn train_split(&self) -> Option<Self> {
        (self.train_vehicles > 0).then(|| Self {
            seed: self.seed.wrapping_add(TRAIN_SEED_OFFSET),
            vehicles: self.train_vehicles,
            train_vehicles: 0,
            ..self.clone()
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkedVehicle {
    pub id: i64,
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl ParkedVehicle {
    pub fn bbox(&self) -> BoundingBox {
        BoundingBox::new(self.left, self.top, self.width, self.height).expect("generated boxes are valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraManifest {
    pub id: String,
    pub frames: u32,
    /// Moving vehicles (ground-truth ids) seen by this camera.
    pub vehicles: Vec<i64>,
    pub parked: Vec<ParkedVehicle>,
    pub clutter: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: SimConfig,
    pub cameras: Vec<CameraManifest>,
}

#[derive(Debug, Clone)]
pub struct CameraData {
    pub camera: CameraId,
    pub mask: RoiMask,
    pub detections: Vec<MotRecord>,
    /// Keyed by detection index within the frame.
    pub detection_features: Vec<FeatureRecord>,
    pub gt: Vec<MotRecord>,
    /// Keyed by ground-truth id.
    pub gt_features: Vec<FeatureRecord>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub manifest: Manifest,
    pub cameras: Vec<CameraData>,
    pub global_gt: Vec<MtmcRecord>,
}

/// One object's box per frame in a camera.
struct Path1 {
    id: i64,
    first_frame: u32,
    boxes: Vec<BoundingBox>,
}

impl Path1 {
    fn at(&self, frame: u32) -> Option<BoundingBox> {
        frame
            .checked_sub(self.first_frame)
            .and_then(|i| self.boxes.get(i as usize).copied())
    }

    fn end(&self) -> u32 {
        self.first_frame + self.boxes.len() as u32
    }
}

struct FeatureModel {
    centres: BTreeMap<i64, Vec<f64>>,
    dim: usize,
    spread: f64,
    separation: f64,
}

impl FeatureModel {
    fn random_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-9 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }

    /// Centres on the sphere of radius `separation`, resampled until every pair is at least
    /// `separation` apart.
    fn new(ids: &[i64], cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut centres: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for &id in ids {
            let mut tries = 0;
            let c = loop {
                let c: Vec<f64> = Self::random_direction(cfg.feature_dim, rng)
                    .into_iter()
                    .map(|x| x * cfg.feature_separation)
                    .collect();
                let far = centres.values().all(|o| {
                    o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= cfg.feature_separation
                });
                if far {
                    break c;
                }
                tries += 1;
                if tries > MAX_FEATURE_TRIES {
                    return Err(Error::Config(format!(
                        "cannot place {} feature clusters in {} dimensions; raise feature_dim",
                        ids.len(),
                        cfg.feature_dim
                    )));
                }
            };
            centres.insert(id, c);
        }
        Ok(Self {
            centres,
            dim: cfg.feature_dim,
            spread: cfg.feature_spread,
            separation: cfg.feature_separation,
        })
    }

    fn sample(&self, id: i64, rng: &mut ChaCha8Rng) -> FeatureVector {
        let std = self.spread / (self.dim as f64).sqrt();
        let c = &self.centres[&id];
        let v = c
            .iter()
            .map(|x| {
                let z: f64 = StandardNormal.sample(rng);
                x + std * z
            })
            .collect();
        FeatureVector::new(v).expect("finite by construction")
    }

    fn spurious(&self, rng: &mut ChaCha8Rng) -> FeatureVector {
        let v = Self::random_direction(self.dim, rng)
            .into_iter()
            .map(|x| x * self.separation)
            .collect();
        FeatureVector::new(v).expect("finite by construction")
    }
}

fn camera_name(i: usize) -> String {
    CameraId(i as u32 + 1).to_string()
}

/// A left-to-right or right-to-left drive along a horizontal line, growing 0.8x to 1.2x.
fn drive(first_frame: u32, centre_y: f64, width: f64, height: f64, speed: f64, leftward: bool, id: i64) -> Path1 {
    let w = IMAGE_WIDTH as f64;
    let span = w - 2.0 * EDGE_MARGIN - 1.2 * width;
    let n = ((span / speed).floor() as usize).max(2);
    let boxes = (0..n)
        .map(|t| {
            let s = 0.8 + 0.4 * t as f64 / (n - 1) as f64;
            let (bw, bh) = (width * s, height * s);
            let travelled = speed * t as f64;
            let left = if leftward {
                w - EDGE_MARGIN - travelled - bw
            } else {
                EDGE_MARGIN + travelled
            };
            BoundingBox::new(left, centre_y - bh / 2.0, bw, bh).expect("positive size")
        })
        .collect();
    Path1 {
        id,
        first_frame,
        boxes,
    }
}

fn random_size(rng: &mut ChaCha8Rng, w_range: (f64, f64), ratio_range: (f64, f64)) -> (f64, f64) {
    let w = rng.random_range(w_range.0..=w_range.1);
    (w, w * rng.random_range(ratio_range.0..=ratio_range.1))
}

/// Vehicles in lanes, scheduled so one lane holds one vehicle at a time.
fn schedule_lanes(ids: &[i64], cfg: &SimConfig, rng: &mut ChaCha8Rng) -> Vec<Path1> {
    let mut free = [0u32; LANES];
    let mut order = ids.to_vec();
    order.shuffle(rng);
    order
        .into_iter()
        .map(|id| {
            let lane = (0..LANES).min_by_key(|&l| (free[l], l)).expect("lanes exist");
            let start = free[lane] + rng.random_range(0..=LANE_GAP);
            let (w, h) = random_size(rng, (50.0, 90.0), (0.6, 0.8));
            let speed = rng.random_range(cfg.speed_min..=cfg.speed_max);
            let centre = LANE_FIRST_CENTRE + LANE_SPACING * lane as f64;
            let path = drive(start, centre, w, h, speed, rng.random_bool(0.5), id);
            free[lane] = path.end() + LANE_GAP;
            path
        })
        .collect()
}

fn noisy(b: BoundingBox, std: f64, rng: &mut ChaCha8Rng) -> BoundingBox {
    if std == 0.0 {
        return b;
    }
    let n = Normal::new(0.0, std).expect("validated std");
    BoundingBox::new(
        b.left() + n.sample(rng),
        b.top() + n.sample(rng),
        (b.width() + n.sample(rng)).max(2.0),
        (b.height() + n.sample(rng)).max(2.0),
    )
    .expect("finite noisy box")
}

pub fn roi_mask() -> RoiMask {
    RoiMask::from_fn(IMAGE_WIDTH, IMAGE_HEIGHT, |_, row| row >= ROI_TOP).expect("static size")
}

struct CameraPlan {
    vehicles: Vec<i64>,
    parked: Vec<i64>,
    clutter: Vec<i64>,
}

pub fn generate(cfg: &SimConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut plans: Vec<CameraPlan> = (0..cfg.cameras)
        .map(|_| CameraPlan {
            vehicles: Vec::new(),
            parked: Vec::new(),
            clutter: Vec::new(),
        })
        .collect();
    for v in 1..=cfg.vehicles as i64 {
        let mut visited = false;
        for plan in plans.iter_mut() {
            if rng.random_bool(cfg.visit_probability) {
                plan.vehicles.push(v);
                visited = true;
            }
        }
        if !visited {
            let c = rng.random_range(0..cfg.cameras);
            plans[c].vehicles.push(v);
        }
    }
    let mut next_id = cfg.vehicles as i64 + 1;
    for plan in plans.iter_mut() {
        plan.parked = (next_id..next_id + cfg.parked_per_camera as i64).collect();
        next_id += cfg.parked_per_camera as i64;
        plan.clutter = (next_id..next_id + cfg.clutter_per_camera as i64).collect();
        next_id += cfg.clutter_per_camera as i64;
    }
    let all_ids: Vec<i64> = (1..next_id).collect();
    let features = FeatureModel::new(&all_ids, cfg, &mut rng)?;
    let mask = roi_mask();

    let mut cameras = Vec::new();
    let mut manifests = Vec::new();
    let mut global_gt = Vec::new();
    for (ci, plan) in plans.iter().enumerate() {
        let camera = CameraId(ci as u32 + 1);
        let moving = schedule_lanes(&plan.vehicles, cfg, &mut rng);
        let frames = moving.iter().map(Path1::end).max().unwrap_or(0).max(50) + 5;

        let mut clutter_paths = Vec::new();
        let mut free = 0u32;
        for &id in &plan.clutter {
            let (w, h) = random_size(&mut rng, (40.0, 70.0), (0.6, 0.8));
            let speed = rng.random_range(cfg.speed_min..=cfg.speed_max);
            let start = free + rng.random_range(0..=LANE_GAP);
            let mut path = drive(start, CLUTTER_CENTRE, w, h, speed, rng.random_bool(0.5), id);
            path.boxes.truncate(frames.saturating_sub(start) as usize);
            free = path.end() + LANE_GAP;
            if path.boxes.len() >= 2 {
                clutter_paths.push(path);
            }
        }

        let slots = ((IMAGE_WIDTH as f64 - 2.0 * EDGE_MARGIN) / PARKING_SLOT) as usize;
        let mut slot_ids: Vec<usize> = (0..slots).collect();
        slot_ids.shuffle(&mut rng);
        let parked: Vec<ParkedVehicle> = plan
            .parked
            .iter()
            .zip(slot_ids)
            .map(|(&id, slot)| {
                let (w, h) = random_size(&mut rng, (60.0, 80.0), (0.6, 0.7));
                ParkedVehicle {
                    id,
                    left: EDGE_MARGIN + PARKING_SLOT * slot as f64 + (PARKING_SLOT - w) / 2.0,
                    top: PARKING_TOP,
                    width: w,
                    height: h,
                }
            })
            .collect();
        let parked_paths: Vec<Path1> = parked
            .iter()
            .map(|p| Path1 {
                id: p.id,
                first_frame: 0,
                boxes: vec![p.bbox(); frames as usize],
            })
            .collect();

        let spurious = (cfg.spurious_rate > 0.0).then(|| Poisson::new(cfg.spurious_rate).expect("positive rate"));
        let (mut detections, mut det_feats, mut gt, mut gt_feats) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for frame in 0..frames {
            let mut dets: Vec<(BoundingBox, f64, FeatureVector)> = Vec::new();
            for (is_gt, path) in moving
                .iter()
                .map(|p| (true, p))
                .chain(parked_paths.iter().chain(&clutter_paths).map(|p| (false, p)))
            {
                let Some(b) = path.at(frame) else { continue };
                let feature = features.sample(path.id, &mut rng);
                if is_gt {
                    gt.push(MotRecord {
                        frame,
                        id: path.id,
                        bbox: b,
                        confidence: 1.0,
                        class: 1,
                        visibility: 1.0,
                    });
                    gt_feats.push(FeatureRecord {
                        camera,
                        frame,
                        key: path.id,
                        feature: feature.clone(),
                    });
                    global_gt.push(MtmcRecord {
                        camera,
                        global_id: path.id,
                        frame,
                        bbox: b,
                    });
                }
                if rng.random_bool(cfg.miss_rate) {
                    continue;
                }
                let conf = rng.random_range(0.5..=1.0);
                dets.push((noisy(b, cfg.noise_std, &mut rng), conf, feature));
            }
            if let Some(poisson) = &spurious {
                let count = poisson.sample(&mut rng) as usize;
                for _ in 0..count {
                    let (w, h) = random_size(&mut rng, (30.0, 80.0), (0.5, 1.0));
                    let left = rng.random_range(0.0..IMAGE_WIDTH as f64 - w);
                    let top = rng.random_range(0.0..IMAGE_HEIGHT as f64 - h);
                    let b = BoundingBox::new(left, top, w, h).expect("positive size");
                    dets.push((b, rng.random_range(0.1..=0.6), features.spurious(&mut rng)));
                }
            }
            dets.shuffle(&mut rng);
            for (k, (b, conf, f)) in dets.into_iter().enumerate() {
                detections.push(MotRecord::detection(frame, b, conf));
                det_feats.push(FeatureRecord {
                    camera,
                    frame,
                    key: k as i64,
                    feature: f,
                });
            }
        }

        manifests.push(CameraManifest {
            id: camera_name(ci),
            frames,
            vehicles: plan.vehicles.clone(),
            parked,
            clutter: clutter_paths.iter().map(|p| p.id).collect(),
        });
        cameras.push(CameraData {
            camera,
            mask: mask.clone(),
            detections,
            detection_features: det_feats,
            gt,
            gt_features: gt_feats,
        });
    }
    global_gt.sort_by_key(|r| (r.camera, r.frame, r.global_id));
    Ok(Scenario {
        manifest: Manifest {
            config: cfg.clone(),
            cameras: manifests,
        },
        cameras,
        global_gt,
    })
}

/// Relative paths of one camera's files inside a scenario directory.
pub struct CameraFiles {
    pub detections: PathBuf,
    pub detection_features: PathBuf,
    pub gt: PathBuf,
    pub gt_features: PathBuf,
    pub mask: PathBuf,
}

pub fn camera_files(camera: CameraId) -> CameraFiles {
    let dir = PathBuf::from(camera.to_string());
    CameraFiles {
        detections: dir.join("det.txt"),
        detection_features: dir.join("det_feat.csv"),
        gt: dir.join("gt.txt"),
        gt_features: dir.join("gt_feat.csv"),
        mask: dir.join("roi.pgm"),
    }
}

pub const MANIFEST_FILE: &str = "scenario.toml";
pub const GLOBAL_GT_FILE: &str = "gt_mtmc.txt";
pub const PIPELINE_FILE: &str = "pipeline.toml";
pub const TRAIN_DIR: &str = "train";

fn write_scenario_files(dir: &Path, s: &Scenario) -> Result<()> {
    for cam in &s.cameras {
        let f = camera_files(cam.camera);
        io::write_mot(&dir.join(&f.detections), &cam.detections)?;
        io::write_features(&dir.join(&f.detection_features), &cam.detection_features)?;
        io::write_mot(&dir.join(&f.gt), &cam.gt)?;
        io::write_features(&dir.join(&f.gt_features), &cam.gt_features)?;
        cam.mask.write_pgm(&dir.join(&f.mask))?;
    }
    io::write_mtmc(&dir.join(GLOBAL_GT_FILE), &s.global_gt)?;
    let manifest = toml::to_string(&s.manifest).map_err(|e| Error::Config(format!("manifest: {e}")))?;
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Pipeline configuration for a generated scenario, paths relative to the scenario directory.
fn pipeline_toml(s: &Scenario, train: Option<&Scenario>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "seed = {}", s.manifest.config.seed);
    let _ = writeln!(out, "tracker = \"deepsort\"");
    for cam in &s.cameras {
        let f = camera_files(cam.camera);
        let _ = writeln!(out, "\n[[cameras]]");
        let _ = writeln!(out, "id = \"{}\"", cam.camera);
        let _ = writeln!(out, "detections = \"{}\"", f.detections.display());
        let _ = writeln!(out, "features = \"{}\"", f.detection_features.display());
        let _ = writeln!(out, "mask = \"{}\"", f.mask.display());
        let _ = writeln!(out, "gt = \"{}\"", f.gt.display());
        let _ = writeln!(out, "gt_features = \"{}\"", f.gt_features.display());
    }
    if let Some(train) = train {
        for cam in &train.cameras {
            let f = camera_files(cam.camera);
            let _ = writeln!(out, "\n[[train_data]]");
            let _ = writeln!(out, "features = \"{TRAIN_DIR}/{}\"", f.gt_features.display());
        }
    }
    let _ = writeln!(out, "\n[eval]");
    let _ = writeln!(out, "gt_mtmc = \"{GLOBAL_GT_FILE}\"");
    out
}

/// Writes the scenario, its training split (unless disabled) and a ready-to-run pipeline
/// configuration into `dir`.
pub fn write_scenario(dir: &Path, cfg: &SimConfig) -> Result<Scenario> {
    let scenario = generate(cfg)?;
    write_scenario_files(dir, &scenario)?;
    let train = match cfg.train_split() {
        Some(tcfg) => {
            let t = generate(&tcfg)?;
            write_scenario_files(&dir.join(TRAIN_DIR), &t)?;
            Some(t)
        }
        None => None,
    };
    let path = dir.join(PIPELINE_FILE);
    std::fs::write(&path, pipeline_toml(&scenario, train.as_ref())).map_err(|e| Error::io(&path, e))?;
    Ok(scenario)
}
