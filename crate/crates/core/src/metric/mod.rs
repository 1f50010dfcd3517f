//! Appearance features and triplet metric learning.

mod embedding;
mod features;
mod train;
mod triplet;

pub use embedding::{Affine, Checkpoint, EmbeddingModel};
pub use features::{histogram_features, PixelPatch};
pub use train::{calibrate_max_dist, embedding_distance_stats, fit, FitResult, TrainConfig};
pub use triplet::{mine_triplets, triplet_loss, triplet_loss_grad, triplet_pre_hinge, MiningStrategy, Triplet};
