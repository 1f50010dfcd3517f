use crate::error::{Error, Result};
use crate::metric::EmbeddingModel;
use crate::types::{CameraId, Track};

/// Samples kept per track.
pub const SIGNATURE_SAMPLES: usize = 5;
/// Fraction of a track's detections (largest boxes first) eligible for sampling.
pub const TOP_AREA_FRACTION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSignature {
    pub camera: CameraId,
    pub track_id: i64,
    pub embeddings: Vec<Vec<f64>>,
    pub summary: Vec<f64>,
}

impl TrackSignature {
    /// Builds a signature from already-computed embeddings; `summary` is their mean.
    pub fn from_embeddings(camera: CameraId, track_id: i64, embeddings: Vec<Vec<f64>>) -> Result<Self> {
        let first = embeddings
            .first()
            .ok_or_else(|| Error::InvalidValue("signature needs at least one embedding".into()))?;
        let dim = first.len();
        if let Some(e) = embeddings.iter().find(|e| e.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: e.len(),
            });
        }
        let summary = mean(&embeddings);
        Ok(Self {
            camera,
            track_id,
            embeddings,
            summary,
        })
    }
}

pub(crate) fn mean(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len() as f64;
    let mut acc = vec![0.0; vectors[0].len()];
    for v in vectors {
        acc.iter_mut().zip(v).for_each(|(a, x)| *a += x);
    }
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// Size of the largest-area subset for a track of `n` detections: `ceil(0.3 n)`, at least 1.
pub fn top_subset_size(n: usize) -> usize {
    ((n as f64 * TOP_AREA_FRACTION).ceil() as usize).clamp(1, n.max(1))
}

/// Evenly spaced positions `floor(k (m-1) / 4)` for `k = 0..5` in a subset of size `m`,
/// or every position when `m <= 5`.
pub fn sample_positions(m: usize) -> Vec<usize> {
    if m <= SIGNATURE_SAMPLES {
        return (0..m).collect();
    }
    let last = SIGNATURE_SAMPLES - 1;
    (0..SIGNATURE_SAMPLES).map(|k| k * (m - 1) / last).collect()
}

/// Indices into `track.detections()` chosen for the signature, in frame order.
/// Equal areas are ranked by frame (earlier first).
pub fn signature_indices(track: &Track) -> Vec<usize> {
    let dets = track.detections();
    let mut by_area: Vec<usize> = (0..dets.len()).collect();
    by_area.sort_by(|&a, &b| dets[b].bbox.area().total_cmp(&dets[a].bbox.area()).then(a.cmp(&b)));
    by_area.truncate(top_subset_size(dets.len()));
    by_area.sort_unstable();
    sample_positions(by_area.len()).into_iter().map(|p| by_area[p]).collect()
}

pub fn build_signature(track: &Track, model: &EmbeddingModel) -> Result<TrackSignature> {
    if track.is_empty() {
        return Err(Error::InvalidValue("cannot build a signature for an empty track".into()));
    }
    let embeddings = signature_indices(track)
        .into_iter()
        .map(|i| {
            let det = &track.detections()[i];
            let feature = det.feature.as_ref().ok_or(Error::MissingFeature {
                camera: track.camera().0,
                track_id: track.track_id(),
                frame: det.frame,
            })?;
            model.embed(feature.as_slice())
        })
        .collect::<Result<Vec<_>>>()?;
    TrackSignature::from_embeddings(track.camera(), track.track_id(), embeddings)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Euclidean distance between summary embeddings.
pub fn signature_distance(a: &TrackSignature, b: &TrackSignature) -> Result<f64> {
    if a.summary.len() != b.summary.len() {
        return Err(Error::DimensionMismatch {
            expected: a.summary.len(),
            actual: b.summary.len(),
        });
    }
    Ok(euclidean(&a.summary, &b.summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;
    use crate::metric::Affine;
    use crate::types::{Detection, FeatureVector};

    fn track(areas: &[f64]) -> Track {
        let dets = areas
            .iter()
            .enumerate()
            .map(|(f, &a)| {
                Detection::new(f as u32, BoundingBox::new(0.0, 0.0, a, 1.0).unwrap(), 1.0)
                    .unwrap()
                    .with_feature(FeatureVector::new(vec![f as f64, a]).unwrap())
            })
            .collect();
        Track::new(CameraId(1), 7, dets).unwrap()
    }

    fn identity_model() -> EmbeddingModel {
        let mut l = Affine::zeros(2, 2);
        l.weights = vec![1.0, 0.0, 0.0, 1.0];
        EmbeddingModel::from_layers(vec![l], false).unwrap()
    }

    #[test]
    fn four_detections_keep_two() {
        let t = track(&[1.0, 4.0, 3.0, 2.0]);
        assert_eq!(top_subset_size(4), 2);
        assert_eq!(signature_indices(&t), vec![1, 2]);
        let sig = build_signature(&t, &identity_model()).unwrap();
        assert_eq!(sig.embeddings.len(), 2);
        assert_eq!(sig.summary, vec![1.5, 3.5]);
    }

    #[test]
    fn hundred_equal_areas_sample_fixed_positions() {
        let t = track(&[10.0; 100]);
        assert_eq!(top_subset_size(100), 30);
        assert_eq!(sample_positions(30), vec![0, 7, 14, 21, 29]);
        // equal areas: subset is the 30 earliest frames
        assert_eq!(signature_indices(&t), vec![0, 7, 14, 21, 29]);
    }

    #[test]
    fn single_detection() {
        let sig = build_signature(&track(&[3.0]), &identity_model()).unwrap();
        assert_eq!(sig.embeddings.len(), 1);
    }

    #[test]
    fn samples_come_from_largest_boxes() {
        let areas: Vec<f64> = (0..40).map(|i| ((i * 17) % 40) as f64 + 1.0).collect();
        let t = track(&areas);
        let cutoff = {
            let mut s = areas.clone();
            s.sort_by(|a, b| b.total_cmp(a));
            s[top_subset_size(40) - 1]
        };
        let idx = signature_indices(&t);
        assert_eq!(idx.len(), 5);
        assert!(idx.windows(2).all(|w| w[0] < w[1]));
        assert!(idx.iter().all(|&i| areas[i] >= cutoff));
    }

    #[test]
    fn missing_feature_names_detection() {
        let dets = vec![Detection::new(4, BoundingBox::new(0.0, 0.0, 2.0, 2.0).unwrap(), 1.0).unwrap()];
        let t = Track::new(CameraId(3), 9, dets).unwrap();
        let err = build_signature(&t, &identity_model()).unwrap_err();
        assert!(matches!(
            err,
            Error::MissingFeature {
                camera: 3,
                track_id: 9,
                frame: 4
            }
        ));
    }

    #[test]
    fn distance_examples() {
        let a = TrackSignature::from_embeddings(CameraId(1), 1, vec![vec![0.0, 0.0]]).unwrap();
        let b = TrackSignature::from_embeddings(CameraId(2), 1, vec![vec![3.0, 4.0]]).unwrap();
        assert_eq!(signature_distance(&a, &b).unwrap(), 5.0);
        assert_eq!(signature_distance(&b, &a).unwrap(), 5.0);
        assert_eq!(signature_distance(&a, &a).unwrap(), 0.0);
        let c = TrackSignature::from_embeddings(CameraId(2), 1, vec![vec![3.0]]).unwrap();
        assert!(signature_distance(&a, &c).is_err());
    }
}
