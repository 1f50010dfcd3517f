//! Learned projection from feature space to the embedding space: one or two affine maps
//! with a `tanh` between them, optionally followed by L2 normalisation.
//!
//! Checkpoints are plain text, one token group per line:
//!
//! ```text
//! mtmc-embedding 1
//! normalize 1
//! activation tanh
//! layers <count>
//! layer <in_dim> <out_dim>
//! weights <out_dim * in_dim values, row-major>
//! bias <out_dim values>
//! ...                         (one layer/weights/bias triple per layer)
//! calibrated_max_dist <value>  (optional)
//! ```
//!
//! Values are written with Rust's shortest round-trip float formatting, so loading a saved
//! checkpoint reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const MAGIC: &str = "mtmc-embedding";
const VERSION: u32 = 1;

/// Norms below this are treated as zero and produce a zero embedding.
const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in `[-1/sqrt(in_dim), 1/sqrt(in_dim)]` for weights and bias.
    fn random(in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
        let weights = draw(in_dim * out_dim);
        let bias = draw(out_dim);
        Self {
            in_dim,
            out_dim,
            weights,
            bias,
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    layers: Vec<Affine>,
    normalize: bool,
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub(crate) struct ForwardCache {
    /// Input to each layer.
    pub inputs: Vec<Vec<f64>>,
    pub norm: f64,
    pub output: Vec<f64>,
}

impl EmbeddingModel {
    /// Seeded random model; `hidden_dim` adds a tanh hidden layer.
    pub fn new(input_dim: usize, hidden_dim: Option<usize>, embed_dim: usize, normalize: bool, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = match hidden_dim {
            Some(h) => vec![Affine::random(input_dim, h, &mut rng), Affine::random(h, embed_dim, &mut rng)],
            None => vec![Affine::random(input_dim, embed_dim, &mut rng)],
        };
        Self::from_layers(layers, normalize)
    }

    pub fn from_layers(layers: Vec<Affine>, normalize: bool) -> Result<Self> {
        if layers.is_empty() || layers.len() > 2 {
            return Err(Error::InvalidValue(format!(
                "model needs one or two layers, got {}",
                layers.len()
            )));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim == 0 || l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::InvalidValue(format!("layer {i} has inconsistent shape")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::InvalidValue(format!("layer {i} has non-finite parameters")));
            }
        }
        if let [a, b] = layers.as_slice() {
            if a.out_dim != b.in_dim {
                return Err(Error::DimensionMismatch {
                    expected: a.out_dim,
                    actual: b.in_dim,
                });
            }
        }
        if layers[layers.len() - 1].out_dim < 2 {
            return Err(Error::InvalidValue("embedding dimension must be at least 2".into()));
        }
        Ok(Self { layers, normalize })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn normalizes(&self) -> bool {
        self.normalize
    }

    pub fn layers(&self) -> &[Affine] {
        &self.layers
    }

    pub fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.output)
    }

    pub(crate) fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.apply(&h);
            inputs.push(h);
            h = if i + 1 < self.layers.len() {
                z.into_iter().map(f64::tanh).collect()
            } else {
                z
            };
        }
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        let output = if !self.normalize {
            h
        } else if norm < NORM_EPS {
            vec![0.0; h.len()]
        } else {
            h.iter().map(|v| v / norm).collect()
        };
        Ok(ForwardCache {
            inputs,
            norm,
            output,
        })
    }

    /// Accumulates `scale * d(output)/d(params)^T grad_output` into `grad` (flat layout of
    /// [`EmbeddingModel::params`]).
    pub(crate) fn backward(&self, cache: &ForwardCache, grad_output: &[f64], scale: f64, grad: &mut [f64]) {
        let mut g: Vec<f64> = if !self.normalize {
            grad_output.to_vec()
        } else if cache.norm < NORM_EPS {
            return;
        } else {
            // d(z/|z|)/dz = (I - e e^T) / |z|
            let dot: f64 = cache.output.iter().zip(grad_output).map(|(e, g)| e * g).sum();
            cache
                .output
                .iter()
                .zip(grad_output)
                .map(|(e, g)| (g - e * dot) / cache.norm)
                .collect()
        };
        let offsets = self.layer_offsets();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[li];
            let base = offsets[li];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let row = &mut grad[base + o * layer.in_dim..base + (o + 1) * layer.in_dim];
                for (w, &x) in row.iter_mut().zip(input) {
                    *w += scale * go * x;
                }
                grad[base + layer.weights.len() + o] += scale * go;
            }
            if li > 0 {
                // back through W, then through the tanh that produced `input`
                g = (0..layer.in_dim)
                    .map(|i| {
                        let back: f64 = g
                            .iter()
                            .enumerate()
                            .map(|(o, go)| go * layer.weights[o * layer.in_dim + i])
                            .sum();
                        back * (1.0 - input[i] * input[i])
                    })
                    .collect();
            }
        }
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.layers
            .iter()
            .map(|l| {
                let o = acc;
                acc += l.param_count();
                o
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Affine::param_count).sum()
    }

    /// Flat parameter vector: per layer, weights (row-major) then bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                expected: self.param_count(),
                actual: params.len(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|p| {
                *p = it.next().expect("length checked above");
            });
        }
        Ok(())
    }
}

/// A trained model plus the cross-camera distance threshold calibrated on its training set.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EmbeddingModel,
    pub calibrated_max_dist: Option<f64>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {VERSION}");
        let _ = writeln!(out, "normalize {}", u8::from(self.model.normalize));
        let _ = writeln!(out, "activation tanh");
        let _ = writeln!(out, "layers {}", self.model.layers.len());
        for l in &self.model.layers {
            let _ = writeln!(out, "layer {} {}", l.in_dim, l.out_dim);
            let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            let _ = writeln!(out, "weights {}", join(&l.weights));
            let _ = writeln!(out, "bias {}", join(&l.bias));
        }
        if let Some(d) = self.calibrated_max_dist {
            let _ = writeln!(out, "calibrated_max_dist {d}");
        }
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
        let mut next = |key: &str| -> Result<(usize, Vec<&str>)> {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("unexpected end of checkpoint, expected '{key}'")))?;
            let mut toks = line.split_whitespace();
            if toks.next() != Some(key) {
                return Err(Error::parse(path, n, format!("expected '{key}'")));
            }
            Ok((n, toks.collect()))
        };
        let num = |n: usize, tok: &str| -> Result<f64> {
            tok.parse().map_err(|_| Error::parse(path, n, format!("invalid number '{tok}'")))
        };
        let count = |n: usize, tok: Option<&&str>| -> Result<usize> {
            tok.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(path, n, "expected a non-negative integer"))
        };

        let (n, v) = next(MAGIC)?;
        if count(n, v.first())? != VERSION as usize {
            return Err(Error::parse(path, n, "unsupported checkpoint version"));
        }
        let (n, v) = next("normalize")?;
        let normalize = count(n, v.first())? != 0;
        let (n, v) = next("activation")?;
        if v.first() != Some(&"tanh") {
            return Err(Error::parse(path, n, "unsupported activation"));
        }
        let (n, v) = next("layers")?;
        let layer_count = count(n, v.first())?;
        let mut layers = Vec::with_capacity(layer_count);
        for _ in 0..layer_count {
            let (n, v) = next("layer")?;
            let (in_dim, out_dim) = (count(n, v.first())?, count(n, v.get(1))?);
            let (n, w) = next("weights")?;
            let weights = w.iter().map(|t| num(n, t)).collect::<Result<Vec<_>>>()?;
            let (n, b) = next("bias")?;
            let bias = b.iter().map(|t| num(n, t)).collect::<Result<Vec<_>>>()?;
            if weights.len() != in_dim * out_dim || bias.len() != out_dim {
                return Err(Error::parse(path, n, "layer parameter count does not match its shape"));
            }
            layers.push(Affine {
                in_dim,
                out_dim,
                weights,
                bias,
            });
        }
        let calibrated_max_dist = match next("calibrated_max_dist") {
            Ok((n, v)) => Some(num(n, v.first().copied().unwrap_or(""))?),
            Err(_) => None,
        };
        let model = EmbeddingModel::from_layers(layers, normalize).map_err(|e| Error::parse(path, 1, e.to_string()))?;
        Ok(Self {
            model,
            calibrated_max_dist,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
