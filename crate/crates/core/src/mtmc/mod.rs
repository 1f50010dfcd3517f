//! Cross-camera re-identification: track signatures, mutual-best matching and sequential
//! merging into global identities.

mod reid;
mod signature;

pub use reid::{
    cross_match, mtmc_records, mutual_best_pairs, sequential_reid, sequential_reid_signatures,
    GlobalIdMap,
};
pub use signature::{
    build_signature, sample_positions, signature_distance, signature_indices, top_subset_size, TrackSignature,
    SIGNATURE_SAMPLES, TOP_AREA_FRACTION,
};
