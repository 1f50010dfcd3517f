//! Training loop: identity-balanced batches, triplet mining, AdaGrad updates.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingModel;
use super::triplet::{mine_triplets, triplet_loss_grad, MiningStrategy};
use crate::error::{Error, Result};
use crate::types::FeatureVector;

const ADAGRAD_EPS: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Not read from configuration files; the pipeline passes its own seed.
    #[serde(skip)]
    pub seed: u64,
    pub mining: MiningStrategy,
    /// Samples drawn per identity in each batch.
    pub samples_per_identity: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.2,
            learning_rate: 0.001,
            batch_size: 16,
            epochs: 200,
            seed: 0,
            mining: MiningStrategy::BatchHard,
            samples_per_identity: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be >= 0, got {}", self.margin)));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size < 2 || self.samples_per_identity < 2 {
            return Err(Error::Config(
                "batch_size and samples_per_identity must both be at least 2".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: EmbeddingModel,
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
}

fn group_by_label(dataset: &[(FeatureVector, i64)]) -> BTreeMap<i64, Vec<usize>> {
    let mut groups: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, (_, label)) in dataset.iter().enumerate() {
        groups.entry(*label).or_default().push(i);
    }
    groups
}

/// Trains a copy of `model`. An epoch visits every identity once: identities are shuffled
/// and split into batches of `batch_size / samples_per_identity` (at least 2), each
/// contributing up to `samples_per_identity` random samples. Triplets are mined under the
/// current parameters and each batch takes one AdaGrad step.
pub fn fit(model: &EmbeddingModel, dataset: &[(FeatureVector, i64)], cfg: &TrainConfig) -> Result<FitResult> {
    cfg.validate()?;
    let groups = group_by_label(dataset);
    if groups.len() < 2 {
        return Err(Error::InvalidValue(format!(
            "training needs at least 2 identities, got {}",
            groups.len()
        )));
    }
    if let Some((f, _)) = dataset.iter().find(|(f, _)| f.dim() != model.input_dim()) {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            actual: f.dim(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = model.clone();
    let mut params = model.params();
    let mut accum = vec![0.0; params.len()];
    let mut labels: Vec<i64> = groups.keys().copied().collect();
    let per_batch = (cfg.batch_size / cfg.samples_per_identity).clamp(2, labels.len());
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        labels.shuffle(&mut rng);
        let mut total = 0.0;
        let mut counted = 0usize;
        for (b, chunk) in labels.chunks(per_batch).enumerate() {
            let mut chosen = chunk.to_vec();
            if chosen.len() < 2 {
                // a lone trailing identity borrows a partner from the start of the order
                chosen.push(labels[0]);
            }
            let mut batch = Vec::with_capacity(chosen.len() * cfg.samples_per_identity);
            for label in chosen {
                let idx = &groups[&label];
                let picked: Vec<usize> = idx.choose_multiple(&mut rng, cfg.samples_per_identity).copied().collect();
                batch.extend(picked.into_iter().map(|i| dataset[i].clone()));
            }
            let triplets = mine_triplets(&batch, &model, cfg.mining, &mut rng)?;
            if triplets.is_empty() {
                continue;
            }
            let (loss, grad) = triplet_loss_grad(&model, &triplets, cfg.margin)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    value: loss,
                });
            }
            total += loss;
            counted += 1;
            for ((p, a), g) in params.iter_mut().zip(accum.iter_mut()).zip(&grad) {
                *a += g * g;
                *p -= cfg.learning_rate * g / (a.sqrt() + ADAGRAD_EPS);
            }
            model.set_params(&params)?;
        }
        let mean = if counted == 0 { 0.0 } else { total / counted as f64 };
        log::debug!("epoch {epoch}: mean triplet loss {mean:.6}");
        history.push(mean);
    }
    Ok(FitResult {
        model,
        loss_history: history,
    })
}

/// Mean Euclidean embedding distance over same-label pairs and over different-label pairs.
/// Either is `None` when no such pair exists.
pub fn embedding_distance_stats(
    model: &EmbeddingModel,
    dataset: &[(FeatureVector, i64)],
) -> Result<(Option<f64>, Option<f64>)> {
    let emb = dataset
        .iter()
        .map(|(f, _)| model.embed(f.as_slice()))
        .collect::<Result<Vec<_>>>()?;
    let (mut intra, mut n_intra, mut inter, mut n_inter) = (0.0, 0usize, 0.0, 0usize);
    for i in 0..emb.len() {
        for j in i + 1..emb.len() {
            let d = emb[i].iter().zip(&emb[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dataset[i].1 == dataset[j].1 {
                intra += d;
                n_intra += 1;
            } else {
                inter += d;
                n_inter += 1;
            }
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    Ok((mean(intra, n_intra), mean(inter, n_inter)))
}

/// Samples per identity used for calibration; larger identities are thinned evenly.
pub const CALIBRATION_SAMPLES_PER_IDENTITY: usize = 16;

/// Cross-camera acceptance threshold: midway between the mean intra-identity and mean
/// inter-identity embedding distances on (a per-identity subsample of) the training set.
pub fn calibrate_max_dist(model: &EmbeddingModel, dataset: &[(FeatureVector, i64)]) -> Result<Option<f64>> {
    let k = CALIBRATION_SAMPLES_PER_IDENTITY;
    let sample: Vec<(FeatureVector, i64)> = group_by_label(dataset)
        .into_values()
        .flat_map(|idx| {
            let n = idx.len();
            let take = n.min(k);
            (0..take).map(move |i| idx[i * n / take])
        })
        .map(|i| dataset[i].clone())
        .collect();
    Ok(match embedding_distance_stats(model, &sample)? {
        (Some(intra), Some(inter)) if inter > intra => Some(0.5 * (intra + inter)),
        _ => None,
    })
}
