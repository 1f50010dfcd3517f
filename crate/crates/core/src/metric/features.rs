//! Colour-histogram appearance features, the baseline provider when no learned
//! descriptor is available.

use crate::error::{Error, Result};
use crate::types::FeatureVector;

/// Interleaved 8-bit image patch (`channels` values per pixel, row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelPatch {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl PixelPatch {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidValue("patch needs at least one channel".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch {
                expected: width * height * channels,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }
}

/// Per-channel intensity histograms with `bins` buckets each, every channel L1-normalised
/// so the whole vector sums to the channel count. Dimension is `channels * bins`.
pub fn histogram_features(patch: &PixelPatch, bins: usize) -> Result<FeatureVector> {
    if patch.is_empty() {
        return Err(Error::InvalidValue("empty pixel patch".into()));
    }
    if bins == 0 || bins > 256 {
        return Err(Error::InvalidValue(format!("bin count {bins} outside 1..=256")));
    }
    let c = patch.channels;
    let mut hist = vec![0.0f64; c * bins];
    for px in patch.data.chunks_exact(c) {
        for (ch, &v) in px.iter().enumerate() {
            hist[ch * bins + v as usize * bins / 256] += 1.0;
        }
    }
    let pixels = (patch.width * patch.height) as f64;
    hist.iter_mut().for_each(|h| *h /= pixels);
    FeatureVector::new(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_patch_is_one_hot_per_channel() {
        let data: Vec<u8> = (0..12).flat_map(|_| [0u8, 128, 255]).collect();
        let patch = PixelPatch::new(4, 3, 3, data).unwrap();
        let f = histogram_features(&patch, 4).unwrap();
        assert_eq!(
            f.as_slice(),
            &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn sums_to_channel_count_and_is_permutation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<u8> = (0..7 * 5 * 3).map(|_| rng.random()).collect();
        let patch = PixelPatch::new(7, 5, 3, data.clone()).unwrap();
        let f = histogram_features(&patch, 16).unwrap();
        assert!((f.as_slice().iter().sum::<f64>() - 3.0).abs() < 1e-9);

        let mut pixels: Vec<Vec<u8>> = data.chunks(3).map(<[u8]>::to_vec).collect();
        pixels.shuffle(&mut rng);
        let shuffled = PixelPatch::new(5, 7, 3, pixels.concat()).unwrap();
        assert_eq!(histogram_features(&shuffled, 16).unwrap(), f);
    }

    #[test]
    fn empty_patch_is_error() {
        let patch = PixelPatch::new(0, 4, 3, vec![]).unwrap();
        assert!(histogram_features(&patch, 8).is_err());
        assert!(PixelPatch::new(2, 2, 3, vec![0; 5]).is_err());
    }
}
