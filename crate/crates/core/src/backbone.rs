//! Frozen surrogate vision transformer.
//!
//! A small pre-norm transformer with fixed seed-derived weights. It consumes
//! the token sequence `[cls, prompts…, patches…]` and reports the CLS row
//! after every block, which is all the prompt search and the classifier need
//! from a backbone.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ForoError, Result};
use crate::seed::rng_from;

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackboneConfig {
    pub layers: usize,
    pub embed_dim: usize,
    pub patches: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    /// Weight seed. Derived from the experiment seed when built by the engine.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            layers: 4,
            embed_dim: 16,
            patches: 8,
            heads: 2,
            mlp_ratio: 2.0,
            seed: 0,
        }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 {
            return Err(ForoError::InvalidConfig("layers must be at least 1".into()));
        }
        if self.embed_dim < 2 {
            return Err(ForoError::InvalidConfig(
                "embed_dim must be at least 2".into(),
            ));
        }
        if self.patches < 1 {
            return Err(ForoError::InvalidConfig(
                "patches must be at least 1".into(),
            ));
        }
        if self.heads < 1 || !self.embed_dim.is_multiple_of(self.heads) {
            return Err(ForoError::InvalidConfig(format!(
                "heads ({}) must divide embed_dim ({})",
                self.heads, self.embed_dim
            )));
        }
        if !(self.mlp_ratio.is_finite() && self.mlp_ratio > 0.0) {
            return Err(ForoError::InvalidConfig(
                "mlp_ratio must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn hidden_dim(&self) -> usize {
        ((self.embed_dim as f64 * self.mlp_ratio).round() as usize).max(1)
    }
}

/// Learnable prompt rows, `P × d`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptMatrix(pub DMatrix<f64>);

impl PromptMatrix {
    pub fn empty(d: usize) -> Self {
        Self(DMatrix::zeros(0, d))
    }

    pub fn zeros(p: usize, d: usize) -> Self {
        Self(DMatrix::zeros(p, d))
    }

    /// Reshapes a flat row-major genome into `p` prompt rows of width `d`.
    pub fn from_genome(genome: &[f64], p: usize, d: usize) -> Result<Self> {
        if genome.len() != p * d {
            return Err(ForoError::DimensionMismatch {
                context: "prompt genome",
                expected: p * d,
                found: genome.len(),
            });
        }
        Ok(Self(DMatrix::from_row_slice(p, d, genome)))
    }

    pub fn to_genome(&self) -> Vec<f64> {
        let (p, d) = self.0.shape();
        let mut out = Vec::with_capacity(p * d);
        for i in 0..p {
            out.extend(self.0.row(i).iter());
        }
        out
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct TokenSequence {
    pub cls: DVector<f64>,
    pub prompts: DMatrix<f64>,
    pub patches: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// CLS row after each block, first block first.
    pub cls_per_layer: Vec<DVector<f64>>,
}

impl LayerTrace {
    pub fn final_cls(&self) -> &DVector<f64> {
        self.cls_per_layer
            .last()
            .expect("backbone has at least one layer")
    }
}

/// Per-layer, per-dimension statistics of CLS activations over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStats {
    pub mean: Vec<DVector<f64>>,
    /// Population standard deviation (divides by the batch size).
    pub std: Vec<DVector<f64>>,
}

impl LayerStats {
    pub fn layers(&self) -> usize {
        self.mean.len()
    }

    pub fn from_traces(traces: &[LayerTrace]) -> Result<Self> {
        let first = traces.first().ok_or(ForoError::EmptyBatch)?;
        let layers = first.cls_per_layer.len();
        let d = first.final_cls().len();
        let n = traces.len() as f64;
        let mut mean = vec![DVector::zeros(d); layers];
        let mut std = vec![DVector::zeros(d); layers];
        for l in 0..layers {
            for t in traces {
                mean[l] += &t.cls_per_layer[l];
            }
            mean[l] /= n;
            for t in traces {
                let diff = &t.cls_per_layer[l] - &mean[l];
                std[l] += diff.component_mul(&diff);
            }
            std[l] = (&std[l] / n).map(f64::sqrt);
        }
        Ok(Self { mean, std })
    }
}

#[derive(Debug, Clone)]
struct Block {
    wq: DMatrix<f64>,
    wk: DMatrix<f64>,
    wv: DMatrix<f64>,
    wo: DMatrix<f64>,
    w1: DMatrix<f64>,
    w2: DMatrix<f64>,
}

impl Block {
    fn tensors(&self) -> [&DMatrix<f64>; 6] {
        [&self.wq, &self.wk, &self.wv, &self.wo, &self.w1, &self.w2]
    }
}

#[derive(Debug, Clone)]
pub struct Backbone {
    config: BackboneConfig,
    blocks: Vec<Block>,
    cls_token: DVector<f64>,
}

/// Draws a `rows × cols` matrix in row-major order, scaled by `1/√rows`.
fn gaussian<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    let scale = 1.0 / (rows as f64).sqrt();
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            m[(i, j)] = z * scale;
        }
    }
    m
}

fn layer_norm(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let d = x.ncols() as f64;
    for mut row in out.row_iter_mut() {
        let mean = row.sum() / d;
        row.add_scalar_mut(-mean);
        let var = row.norm_squared() / d;
        row /= (var + LN_EPS).sqrt();
    }
    out
}

fn softmax_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let max = row.max();
        row.apply(|v| *v = (*v - max).exp());
        let total = row.sum();
        row /= total;
    }
}

impl Backbone {
    /// Weights are drawn per block in the order q, k, v, o, mlp-in, mlp-out,
    /// then the CLS token, each tensor row-major from one ChaCha stream.
    pub fn build(config: BackboneConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        let h = config.hidden_dim();
        let mut rng = rng_from(config.seed);
        let blocks = (0..config.layers)
            .map(|_| Block {
                wq: gaussian(&mut rng, d, d),
                wk: gaussian(&mut rng, d, d),
                wv: gaussian(&mut rng, d, d),
                wo: gaussian(&mut rng, d, d),
                w1: gaussian(&mut rng, d, h),
                w2: gaussian(&mut rng, h, d),
            })
            .collect();
        let cls_token = DVector::from_fn(d, |_, _| rng.sample(StandardNormal));
        Ok(Self {
            config,
            blocks,
            cls_token,
        })
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.config
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    pub fn layers(&self) -> usize {
        self.config.layers
    }

    pub fn cls_token(&self) -> &DVector<f64> {
        &self.cls_token
    }

    /// SHA-256 over every weight in build order, little-endian.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for block in &self.blocks {
            for t in block.tensors() {
                for i in 0..t.nrows() {
                    for j in 0..t.ncols() {
                        hasher.update(t[(i, j)].to_le_bytes());
                    }
                }
            }
        }
        for v in self.cls_token.iter() {
            hasher.update(v.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    fn attention(&self, block: &Block, h: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.config.embed_dim;
        let heads = self.config.heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let q = h * &block.wq;
        let k = h * &block.wk;
        let v = h * &block.wv;
        let mut concat = DMatrix::zeros(h.nrows(), d);
        for head in 0..heads {
            let qh = q.columns(head * dh, dh);
            let kh = k.columns(head * dh, dh);
            let vh = v.columns(head * dh, dh);
            let mut scores = (qh * kh.transpose()) * scale;
            softmax_rows(&mut scores);
            concat.columns_mut(head * dh, dh).copy_from(&(scores * vh));
        }
        concat * &block.wo
    }

    /// Runs the sequence through every block. Pure: the backbone is never mutated.
    pub fn forward(&self, seq: &TokenSequence) -> Result<LayerTrace> {
        let d = self.config.embed_dim;
        let check = |context, found| {
            if found != d {
                Err(ForoError::DimensionMismatch {
                    context,
                    expected: d,
                    found,
                })
            } else {
                Ok(())
            }
        };
        check("cls width", seq.cls.len())?;
        check("prompt width", seq.prompts.ncols())?;
        check("patch width", seq.patches.ncols())?;
        if seq.patches.nrows() != self.config.patches {
            return Err(ForoError::DimensionMismatch {
                context: "patch count",
                expected: self.config.patches,
                found: seq.patches.nrows(),
            });
        }

        let p = seq.prompts.nrows();
        let tokens = 1 + p + seq.patches.nrows();
        let mut x = DMatrix::zeros(tokens, d);
        x.row_mut(0).copy_from(&seq.cls.transpose());
        x.rows_mut(1, p).copy_from(&seq.prompts);
        x.rows_mut(1 + p, seq.patches.nrows())
            .copy_from(&seq.patches);

        let mut cls_per_layer = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let attn = self.attention(block, &layer_norm(&x));
            x += attn;
            let mut hidden = layer_norm(&x) * &block.w1;
            hidden.apply(|v| *v = v.tanh());
            x += hidden * &block.w2;
            cls_per_layer.push(x.row(0).transpose());
        }
        Ok(LayerTrace { cls_per_layer })
    }

    /// Forward pass of every input with the same prompts.
    ///
    /// Returns the stacked final CLS rows (`n × d`) and per-layer statistics.
    pub fn batch_forward(
        &self,
        prompts: &PromptMatrix,
        inputs: &[DMatrix<f64>],
    ) -> Result<(DMatrix<f64>, LayerStats)> {
        if inputs.is_empty() {
            return Err(ForoError::EmptyBatch);
        }
        let traces: Vec<LayerTrace> = inputs
            .par_iter()
            .map(|patches| {
                self.forward(&TokenSequence {
                    cls: self.cls_token.clone(),
                    prompts: prompts.0.clone(),
                    patches: patches.clone(),
                })
            })
            .collect::<Result<_>>()?;
        let d = self.config.embed_dim;
        let mut features = DMatrix::zeros(traces.len(), d);
        for (i, t) in traces.iter().enumerate() {
            features.row_mut(i).copy_from(&t.final_cls().transpose());
        }
        let stats = LayerStats::from_traces(&traces)?;
        Ok((features, stats))
    }
}
