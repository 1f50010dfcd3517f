//! Region-of-interest masks and border-distance filtering.
//!
//! Pixel `(col, row)` covers `[col, col + 1) x [row, row + 1)` and has its centre at
//! `(col + 0.5, row + 0.5)`. A boundary pixel is an inside pixel that is 4-adjacent to an
//! outside pixel or to the image edge. Distances are measured between the query point and
//! boundary pixel centres, and are negative for points whose pixel is outside the region.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::types::Detection;

#[derive(Debug, Clone, PartialEq)]
pub struct RoiMask {
    width: usize,
    height: usize,
    inside: Vec<bool>,
    /// Sorted boundary-pixel columns, one list per row.
    boundary_rows: Vec<Vec<usize>>,
}

impl RoiMask {
    /// `inside` is row-major, `width * height` long, with at least one `true` pixel.
    pub fn new(width: usize, height: usize, inside: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidValue("mask must have positive size".into()));
        }
        if inside.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: width * height,
                actual: inside.len(),
            });
        }
        if !inside.iter().any(|&v| v) {
            return Err(Error::InvalidValue(
                "mask has no region-of-interest pixel".into(),
            ));
        }
        let mut mask = Self {
            width,
            height,
            inside,
            boundary_rows: Vec::new(),
        };
        mask.boundary_rows = (0..height)
            .map(|row| (0..width).filter(|&col| mask.is_boundary(col, row)).collect())
            .collect();
        Ok(mask)
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let inside = (0..height)
            .flat_map(|row| (0..width).map(move |col| (col, row)))
            .map(|(col, row)| f(col, row))
            .collect();
        Self::new(width, height, inside)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn is_inside(&self, col: usize, row: usize) -> bool {
        self.inside[row * self.width + col]
    }

    pub fn is_boundary(&self, col: usize, row: usize) -> bool {
        if !self.is_inside(col, row) {
            return false;
        }
        if col == 0 || row == 0 || col + 1 == self.width || row + 1 == self.height {
            return true;
        }
        !(self.is_inside(col - 1, row)
            && self.is_inside(col + 1, row)
            && self.is_inside(col, row - 1)
            && self.is_inside(col, row + 1))
    }

    /// Signed distance from `p` to the nearest boundary pixel centre.
    pub fn distance_to_border(&self, p: Point) -> Result<f64> {
        if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= self.width as f64 && p.y <= self.height as f64) {
            return Err(Error::OutOfBounds {
                x: p.x,
                y: p.y,
                width: self.width,
                height: self.height,
            });
        }
        let col = (p.x.floor() as usize).min(self.width - 1);
        let row0 = (p.y.floor() as usize).min(self.height - 1);

        let mut best_sq = f64::INFINITY;
        let scan_row = |row: usize, best_sq: &mut f64| {
            let cols = &self.boundary_rows[row];
            if cols.is_empty() {
                return;
            }
            let dy = row as f64 + 0.5 - p.y;
            let at = cols.partition_point(|&c| (c as f64 + 0.5) < p.x);
            for &i in [at.checked_sub(1), Some(at)].iter().flatten() {
                if let Some(&c) = cols.get(i) {
                    let dx = c as f64 + 0.5 - p.x;
                    *best_sq = best_sq.min(dx * dx + dy * dy);
                }
            }
        };
        // Walk rows outwards until the vertical offset alone exceeds the best distance.
        for row in row0..self.height {
            let dy = row as f64 + 0.5 - p.y;
            if dy * dy > best_sq {
                break;
            }
            scan_row(row, &mut best_sq);
        }
        for row in (0..row0).rev() {
            let dy = row as f64 + 0.5 - p.y;
            if dy * dy > best_sq {
                break;
            }
            scan_row(row, &mut best_sq);
        }

        let dist = best_sq.sqrt();
        Ok(if self.is_inside(col, row0) { dist } else { -dist })
    }

    /// Reads a binary (P5) PGM; pixels with value >= 128 are inside.
    pub fn read_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::parse_pgm(&bytes).map_err(|msg| Error::parse(path, 1, msg))
    }

    pub fn parse_pgm(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut pos = 0usize;
        let mut next_token = || -> std::result::Result<String, String> {
            loop {
                while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < bytes.len() && bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated PGM header".into());
            }
            Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
        };
        if next_token()? != "P5" {
            return Err("not a binary PGM (expected P5 magic)".into());
        }
        let mut number = |what: &str| -> std::result::Result<usize, String> {
            next_token()?
                .parse()
                .map_err(|_| format!("invalid PGM {what}"))
        };
        let width = number("width")?;
        let height = number("height")?;
        let maxval = number("maxval")?;
        if maxval == 0 || maxval > 255 {
            return Err(format!("unsupported PGM maxval {maxval}"));
        }
        // exactly one whitespace byte separates the header from the raster
        let data = bytes
            .get(pos + 1..)
            .ok_or_else(|| "missing PGM raster".to_string())?;
        if data.len() < width * height {
            return Err(format!(
                "PGM raster has {} bytes, expected {}",
                data.len(),
                width * height
            ));
        }
        let inside = data[..width * height].iter().map(|&v| v >= 128).collect();
        Self::new(width, height, inside).map_err(|e| e.to_string())
    }

    /// Writes the mask as a binary PGM (inside = 255, outside = 0).
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.inside.iter().map(|&v| if v { 255u8 } else { 0u8 }));
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

pub fn distance_to_roi_border(p: Point, mask: &RoiMask) -> Result<f64> {
    mask.distance_to_border(p)
}

/// Keeps detections whose box centroid is at least `threshold` pixels inside the region.
/// Centroids outside the image are dropped.
pub fn filter_by_roi(dets: &[Detection], mask: &RoiMask, threshold: f64) -> Vec<Detection> {
    dets.iter()
        .filter(|d| {
            mask.distance_to_border(d.bbox.centroid())
                .map(|dist| dist >= threshold)
                .unwrap_or(false)
        })
        .cloned()
        .collect()
}
