//! Triplet hinge loss, its exact gradient, and triplet mining.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::embedding::EmbeddingModel;
use crate::error::Result;
use crate::types::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub anchor: FeatureVector,
    pub positive: FeatureVector,
    pub negative: FeatureVector,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MiningStrategy {
    Random,
    #[default]
    BatchHard,
}

impl std::str::FromStr for MiningStrategy {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "batch-hard" => Ok(Self::BatchHard),
            other => Err(crate::Error::Config(format!("unknown mining strategy '{other}'"))),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `d(a,p)^2 - d(a,n)^2 + margin`, i.e. the triplet loss before the hinge.
pub fn triplet_pre_hinge(model: &EmbeddingModel, t: &Triplet, margin: f64) -> Result<f64> {
    let a = model.embed(t.anchor.as_slice())?;
    let p = model.embed(t.positive.as_slice())?;
    let n = model.embed(t.negative.as_slice())?;
    Ok(sq_dist(&a, &p) - sq_dist(&a, &n) + margin)
}

pub fn triplet_loss(model: &EmbeddingModel, t: &Triplet, margin: f64) -> Result<f64> {
    Ok(triplet_pre_hinge(model, t, margin)?.max(0.0))
}

/// Mean loss over the batch and its gradient with respect to [`EmbeddingModel::params`].
/// Inactive triplets (pre-hinge value ≤ 0) contribute zero gradient.
pub fn triplet_loss_grad(model: &EmbeddingModel, batch: &[Triplet], margin: f64) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; model.param_count()];
    if batch.is_empty() {
        return Ok((0.0, grad));
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let ca = model.forward(t.anchor.as_slice())?;
        let cp = model.forward(t.positive.as_slice())?;
        let cn = model.forward(t.negative.as_slice())?;
        let (a, p, n) = (&ca.output, &cp.output, &cn.output);
        let pre = sq_dist(a, p) - sq_dist(a, n) + margin;
        if pre <= 0.0 {
            continue;
        }
        loss += pre;
        let ga: Vec<f64> = p.iter().zip(n).map(|(pi, ni)| 2.0 * (ni - pi)).collect();
        let gp: Vec<f64> = a.iter().zip(p).map(|(ai, pi)| -2.0 * (ai - pi)).collect();
        let gn: Vec<f64> = a.iter().zip(n).map(|(ai, ni)| 2.0 * (ai - ni)).collect();
        model.backward(&ca, &ga, scale, &mut grad);
        model.backward(&cp, &gp, scale, &mut grad);
        model.backward(&cn, &gn, scale, &mut grad);
    }
    Ok((loss * scale, grad))
}

/// Builds one triplet per usable anchor (an anchor needs another sample with its label and
/// at least one sample with a different label). `Random` draws positive and negative
/// uniformly; `BatchHard` takes the farthest positive and nearest negative in embedding
/// space, lowest index on ties.
pub fn mine_triplets<R: Rng>(
    batch: &[(FeatureVector, i64)],
    model: &EmbeddingModel,
    strategy: MiningStrategy,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    let embeddings = match strategy {
        MiningStrategy::BatchHard => batch
            .iter()
            .map(|(f, _)| model.embed(f.as_slice()))
            .collect::<Result<Vec<_>>>()?,
        MiningStrategy::Random => Vec::new(),
    };
    let mut out = Vec::new();
    for (i, (anchor, label)) in batch.iter().enumerate() {
        let positives: Vec<usize> = (0..batch.len()).filter(|&j| j != i && batch[j].1 == *label).collect();
        let negatives: Vec<usize> = (0..batch.len()).filter(|&j| batch[j].1 != *label).collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let (p, n) = match strategy {
            MiningStrategy::Random => (
                positives[rng.random_range(0..positives.len())],
                negatives[rng.random_range(0..negatives.len())],
            ),
            MiningStrategy::BatchHard => {
                let d = |j: usize| sq_dist(&embeddings[i], &embeddings[j]);
                let mut p = positives[0];
                for &j in &positives[1..] {
                    if d(j) > d(p) {
                        p = j;
                    }
                }
                let mut n = negatives[0];
                for &j in &negatives[1..] {
                    if d(j) < d(n) {
                        n = j;
                    }
                }
                (p, n)
            }
        };
        out.push(Triplet {
            anchor: anchor.clone(),
            positive: batch[p].0.clone(),
            negative: batch[n].0.clone(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::embedding::Affine;
    use super::*;
    use proptest::prelude::{any, prop_assert, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn identity2() -> EmbeddingModel {
        let mut l = Affine::zeros(2, 2);
        l.weights = vec![1.0, 0.0, 0.0, 1.0];
        EmbeddingModel::from_layers(vec![l], false).unwrap()
    }

    fn triplet(a: &[f64], p: &[f64], n: &[f64]) -> Triplet {
        Triplet {
            anchor: fv(a),
            positive: fv(p),
            negative: fv(n),
        }
    }

    #[test]
    fn loss_examples() {
        let m = identity2();
        // f(a)=f(p), d_an^2 = 4 >= alpha
        assert_eq!(triplet_loss(&m, &triplet(&[0.0, 0.0], &[0.0, 0.0], &[2.0, 0.0]), 0.2).unwrap(), 0.0);
        // full collapse
        assert_eq!(triplet_loss(&m, &triplet(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]), 0.3).unwrap(), 0.3);
        // d_ap^2 = 1, d_an^2 = 2
        let t = triplet(&[0.0, 0.0], &[1.0, 0.0], &[1.0, 1.0]);
        assert_eq!(triplet_loss(&m, &t, 0.5).unwrap(), 0.0);
        assert_eq!(triplet_loss(&m, &t, 1.5).unwrap(), 0.5);
    }

    #[test]
    fn inactive_batch_has_zero_gradient() {
        let m = EmbeddingModel::new(2, Some(3), 2, true, 9).unwrap();
        let t = triplet(&[0.3, 0.1], &[0.3, 0.1], &[0.3, 0.1]);
        let (loss, g) = triplet_loss_grad(&m, &[t], 0.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_gradient_is_mean_of_singles() {
        let m = EmbeddingModel::new(3, Some(4), 2, true, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut draw = || fv(&[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
        let batch: Vec<Triplet> = (0..5)
            .map(|_| Triplet {
                anchor: draw(),
                positive: draw(),
                negative: draw(),
            })
            .collect();
        let (_, g) = triplet_loss_grad(&m, &batch, 1.0).unwrap();
        let mut mean = vec![0.0; g.len()];
        for t in &batch {
            let (_, gi) = triplet_loss_grad(&m, std::slice::from_ref(t), 1.0).unwrap();
            mean.iter_mut().zip(gi).for_each(|(m, v)| *m += v / 5.0);
        }
        for (a, b) in g.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut model = EmbeddingModel::new(3, Some(4), 3, true, 11).unwrap();
        let t = triplet(&[0.5, -0.2, 0.9], &[-0.4, 0.8, 0.1], &[0.45, -0.1, 0.8]);
        let margin = 0.5;
        let (_, g) = triplet_loss_grad(&model, std::slice::from_ref(&t), margin).unwrap();
        let base = model.params();
        let h = 1e-5;
        for k in 0..base.len() {
            let mut p = base.clone();
            p[k] += h;
            model.set_params(&p).unwrap();
            let up = triplet_loss(&model, &t, margin).unwrap();
            p[k] -= 2.0 * h;
            model.set_params(&p).unwrap();
            let down = triplet_loss(&model, &t, margin).unwrap();
            let fd = (up - down) / (2.0 * h);
            let rel = (g[k] - fd).abs() / g[k].abs().max(fd.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {k}: analytic {} vs fd {fd}", g[k]);
        }
    }

    #[test]
    fn only_structure_with_two_a_and_one_b() {
        let m = identity2();
        let batch = vec![(fv(&[0.0, 0.0]), 1), (fv(&[0.1, 0.0]), 1), (fv(&[5.0, 5.0]), 2)];
        for strategy in [MiningStrategy::Random, MiningStrategy::BatchHard] {
            let ts = mine_triplets(&batch, &m, strategy, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            assert_eq!(ts.len(), 2);
            for t in &ts {
                assert_ne!(t.anchor, batch[2].0);
                assert_ne!(t.anchor, t.positive);
                assert_eq!(t.negative, batch[2].0);
            }
        }
    }

    #[test]
    fn batch_hard_picks_far_positive_and_near_negative() {
        let m = identity2();
        let batch = vec![
            (fv(&[0.0, 0.0]), 1),
            (fv(&[0.5, 0.0]), 1),
            (fv(&[9.0, 0.0]), 1),
            (fv(&[3.0, 0.0]), 2),
            (fv(&[20.0, 0.0]), 2),
        ];
        let ts = mine_triplets(&batch, &m, MiningStrategy::BatchHard, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(ts[0].positive, batch[2].0);
        assert_eq!(ts[0].negative, batch[3].0);
    }

    #[test]
    fn no_valid_triplet_gives_empty() {
        let m = identity2();
        let single_label = vec![(fv(&[0.0, 0.0]), 1), (fv(&[1.0, 0.0]), 1)];
        let singletons = vec![(fv(&[0.0, 0.0]), 1), (fv(&[1.0, 0.0]), 2)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(mine_triplets(&single_label, &m, MiningStrategy::Random, &mut rng).unwrap().is_empty());
        assert!(mine_triplets(&singletons, &m, MiningStrategy::BatchHard, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn random_mining_is_seed_reproducible() {
        let m = identity2();
        let batch: Vec<_> = (0..12).map(|i| (fv(&[i as f64, (i * i) as f64]), i64::from(i % 3))).collect();
        let a = mine_triplets(&batch, &m, MiningStrategy::Random, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = mine_triplets(&batch, &m, MiningStrategy::Random, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    proptest! {
        #[test]
        fn loss_bounds(seed in any::<u64>(), margin in 0.0..2.0f64,
                       v in proptest::collection::vec(-2.0..2.0f64, 12)) {
            let m = EmbeddingModel::new(4, None, 3, seed % 2 == 0, seed).unwrap();
            let t = Triplet { anchor: fv(&v[0..4]), positive: fv(&v[4..8]), negative: fv(&v[8..12]) };
            let loss = triplet_loss(&m, &t, margin).unwrap();
            let a = m.embed(&v[0..4]).unwrap();
            let p = m.embed(&v[4..8]).unwrap();
            prop_assert!(loss >= 0.0);
            prop_assert!(loss <= margin + sq_dist(&a, &p) + 1e-12);
        }
    }
}
