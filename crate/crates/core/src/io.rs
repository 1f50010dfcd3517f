//! On-disk formats: MOT-style CSV, feature sidecar CSV and the space-separated
//! multi-camera submission format.
//!
//! All files store 1-based frame numbers; everything in memory is 0-based.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::types::{CameraId, Detection, FeatureVector, Track};

/// One row of a MOT-style file: `frame,id,bb_left,bb_top,bb_width,bb_height,conf,class,visibility`.
#[derive(Debug, Clone, PartialEq)]
pub struct MotRecord {
    pub frame: u32,
    /// `-1` for raw detections.
    pub id: i64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub class: i32,
    pub visibility: f64,
}

impl MotRecord {
    pub fn detection(frame: u32, bbox: BoundingBox, confidence: f64) -> Self {
        Self {
            frame,
            id: -1,
            bbox,
            confidence,
            class: -1,
            visibility: -1.0,
        }
    }

    pub fn to_detection(&self) -> Detection {
        Detection {
            frame: self.frame,
            bbox: self.bbox,
            confidence: self.confidence.clamp(0.0, 1.0),
            feature: None,
        }
    }
}

/// One row of a feature sidecar: `camera,frame,key,feat_0,...`. `key` is the detection's
/// index within its frame for detection sidecars and the track id for track sidecars.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub camera: CameraId,
    pub frame: u32,
    pub key: i64,
    pub feature: FeatureVector,
}

/// One row of the multi-camera output: `camera_id global_id frame_id xmin ymin width height -1 -1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MtmcRecord {
    pub camera: CameraId,
    pub global_id: i64,
    pub frame: u32,
    pub bbox: BoundingBox,
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn field<T: std::str::FromStr>(
    fields: &[&str],
    idx: usize,
    name: &str,
    path: &Path,
    line: usize,
) -> Result<T> {
    let raw = fields
        .get(idx)
        .ok_or_else(|| Error::parse(path, line, format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name} '{raw}'")))
}

/// Parses a 1-based on-disk frame number.
fn disk_frame(raw: f64, path: &Path, line: usize) -> Result<u32> {
    if raw.fract() != 0.0 || raw < 1.0 || raw > u32::MAX as f64 {
        return Err(Error::parse(path, line, format!("invalid frame number {raw}")));
    }
    Ok(raw as u32 - 1)
}

pub fn parse_mot(text: &str, path: &Path) -> Result<Vec<MotRecord>> {
    data_lines(text)
        .map(|(line, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() < 6 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected at least 6 columns, found {}", f.len()),
                ));
            }
            let frame = disk_frame(field(&f, 0, "frame", path, line)?, path, line)?;
            let id: f64 = field(&f, 1, "id", path, line)?;
            let bbox = BoundingBox::new(
                field(&f, 2, "bb_left", path, line)?,
                field(&f, 3, "bb_top", path, line)?,
                field(&f, 4, "bb_width", path, line)?,
                field(&f, 5, "bb_height", path, line)?,
            )
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
            let opt = |idx: usize, name: &str, default: f64| -> Result<f64> {
                if f.len() > idx {
                    field(&f, idx, name, path, line)
                } else {
                    Ok(default)
                }
            };
            Ok(MotRecord {
                frame,
                id: id as i64,
                bbox,
                confidence: opt(6, "conf", 1.0)?,
                class: opt(7, "class", -1.0)? as i32,
                visibility: opt(8, "visibility", -1.0)?,
            })
        })
        .collect()
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRecord>> {
    parse_mot(&read_text(path)?, path)
}

pub fn format_mot(records: &[MotRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3},{},{},{}",
            r.frame + 1,
            r.id,
            r.bbox.left(),
            r.bbox.top(),
            r.bbox.width(),
            r.bbox.height(),
            r.confidence,
            r.class,
            r.visibility
        );
    }
    out
}

pub fn write_mot(path: &Path, records: &[MotRecord]) -> Result<()> {
    write_text(path, &format_mot(records))
}

pub fn parse_features(text: &str, path: &Path) -> Result<Vec<FeatureRecord>> {
    let mut dim = None;
    data_lines(text)
        .map(|(line, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() < 4 {
                return Err(Error::parse(path, line, "feature row needs at least one value"));
            }
            let camera = CameraId::parse(f[0])
                .ok_or_else(|| Error::parse(path, line, format!("invalid camera '{}'", f[0])))?;
            let frame = disk_frame(field(&f, 1, "frame", path, line)?, path, line)?;
            let key: i64 = field(&f, 2, "track_id", path, line)?;
            let values = (3..f.len())
                .map(|i| field::<f64>(&f, i, "feature value", path, line))
                .collect::<Result<Vec<_>>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::parse(
                        path,
                        line,
                        format!("feature dimension {} differs from {d}", values.len()),
                    ))
                }
                _ => {}
            }
            let feature =
                FeatureVector::new(values).map_err(|e| Error::parse(path, line, e.to_string()))?;
            Ok(FeatureRecord {
                camera,
                frame,
                key,
                feature,
            })
        })
        .collect()
}

pub fn read_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    parse_features(&read_text(path)?, path)
}

pub fn format_features(records: &[FeatureRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = write!(out, "{},{},{}", r.camera.0, r.frame + 1, r.key);
        for v in r.feature.as_slice() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_features(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    write_text(path, &format_features(records))
}

pub fn parse_mtmc(text: &str, path: &Path) -> Result<Vec<MtmcRecord>> {
    data_lines(text)
        .map(|(line, l)| {
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() < 7 {
                return Err(Error::parse(
                    path,
                    line,
                    format!("expected at least 7 columns, found {}", f.len()),
                ));
            }
            let camera = CameraId::parse(f[0])
                .ok_or_else(|| Error::parse(path, line, format!("invalid camera '{}'", f[0])))?;
            let global_id: i64 = field(&f, 1, "global_id", path, line)?;
            let frame = disk_frame(field(&f, 2, "frame_id", path, line)?, path, line)?;
            let bbox = BoundingBox::new(
                field(&f, 3, "xmin", path, line)?,
                field(&f, 4, "ymin", path, line)?,
                field(&f, 5, "width", path, line)?,
                field(&f, 6, "height", path, line)?,
            )
            .map_err(|e| Error::parse(path, line, e.to_string()))?;
            Ok(MtmcRecord {
                camera,
                global_id,
                frame,
                bbox,
            })
        })
        .collect()
}

pub fn read_mtmc(path: &Path) -> Result<Vec<MtmcRecord>> {
    parse_mtmc(&read_text(path)?, path)
}

pub fn format_mtmc(records: &[MtmcRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(
            out,
            "{} {} {} {:.3} {:.3} {:.3} {:.3} -1 -1",
            r.camera.0,
            r.global_id,
            r.frame + 1,
            r.bbox.left(),
            r.bbox.top(),
            r.bbox.width(),
            r.bbox.height()
        );
    }
    out
}

pub fn write_mtmc(path: &Path, records: &[MtmcRecord]) -> Result<()> {
    write_text(path, &format_mtmc(records))
}

/// Groups detections by frame, keeping each detection's index within its frame
/// (the order rows appear in the file).
pub fn detections_by_frame(records: &[MotRecord]) -> BTreeMap<u32, Vec<Detection>> {
    let mut frames: BTreeMap<u32, Vec<Detection>> = BTreeMap::new();
    for r in records {
        frames.entry(r.frame).or_default().push(r.to_detection());
    }
    frames
}

/// Attaches sidecar features (keyed by camera, frame and detection index) to detections.
/// Detections without a matching row keep `feature: None`.
pub fn attach_detection_features(
    camera: CameraId,
    frames: &mut BTreeMap<u32, Vec<Detection>>,
    features: &[FeatureRecord],
) {
    for f in features.iter().filter(|f| f.camera == camera) {
        if let Some(det) = frames
            .get_mut(&f.frame)
            .and_then(|dets| usize::try_from(f.key).ok().and_then(|k| dets.get_mut(k)))
        {
            det.feature = Some(f.feature.clone());
        }
    }
}

/// Groups identified records into tracks ordered by id. Features keyed by
/// `(camera, frame, track id)` are attached when present.
pub fn tracks_from_records(
    camera: CameraId,
    records: &[MotRecord],
    features: &[FeatureRecord],
) -> Result<Vec<Track>> {
    let feats: BTreeMap<(u32, i64), &FeatureVector> = features
        .iter()
        .filter(|f| f.camera == camera)
        .map(|f| ((f.frame, f.key), &f.feature))
        .collect();
    let mut by_id: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
    for r in records {
        let mut det = r.to_detection();
        det.feature = feats.get(&(r.frame, r.id)).map(|&f| f.clone());
        by_id.entry(r.id).or_default().push(det);
    }
    by_id
        .into_iter()
        .map(|(id, mut dets)| {
            dets.sort_by_key(|d| d.frame);
            Track::new(camera, id, dets)
        })
        .collect()
}

/// Flattens tracks back into MOT rows ordered by frame, then track id.
pub fn records_from_tracks(tracks: &[Track]) -> Vec<MotRecord> {
    let mut rows: Vec<MotRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.detections().iter().map(move |d| MotRecord {
                frame: d.frame,
                id: t.track_id(),
                bbox: d.bbox,
                confidence: d.confidence,
                class: -1,
                visibility: -1.0,
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.id));
    rows
}

/// Feature rows for every track detection that carries a feature, keyed by track id.
pub fn feature_records_from_tracks(tracks: &[Track]) -> Vec<FeatureRecord> {
    let mut rows: Vec<FeatureRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.detections().iter().filter_map(move |d| {
                d.feature.as_ref().map(|f| FeatureRecord {
                    camera: t.camera(),
                    frame: d.frame,
                    key: t.track_id(),
                    feature: f.clone(),
                })
            })
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.key));
    rows
}
