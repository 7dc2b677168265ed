//! Candidate prompt scoring.
//!
//! The loss of a prompt on a minibatch is the cross-entropy of a throwaway
//! ridge classifier fitted on the projected features of that minibatch, plus
//! `λ` times the distance between the minibatch's per-layer CLS statistics and
//! their running history. The history is an exponential moving average that
//! is advanced once per task.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::backbone::{Backbone, LayerStats, PromptMatrix};
use crate::encoding::{one_hot, RandomProjection};
use crate::error::{ForoError, Result};
use crate::linalg::ridge_in_sample_logits;

/// Softmax probabilities below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitnessConfig {
    pub lambda: f64,
    pub alpha: f64,
    /// Samples per minibatch drawn for each generation.
    pub eval_batch: usize,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            lambda: 0.3,
            alpha: 0.1,
            eval_batch: 32,
        }
    }
}

/// Running per-layer mean/std history of CLS activations.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStats {
    mu: Vec<DVector<f64>>,
    sigma: Vec<DVector<f64>>,
    alpha: f64,
    initialized: bool,
}

impl GlobalStats {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(ForoError::InvalidSpec(format!(
                "alpha must lie in [0, 1], got {alpha}"
            )));
        }
        Ok(Self {
            mu: Vec::new(),
            sigma: Vec::new(),
            alpha,
            initialized: false,
        })
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mean(&self) -> &[DVector<f64>] {
        &self.mu
    }

    pub fn std(&self) -> &[DVector<f64>] {
        &self.sigma
    }

    /// First call copies the statistics; later calls blend
    /// `new = α·current + (1 − α)·old` for both mean and std.
    pub fn update(&mut self, stats: &LayerStats) -> Result<()> {
        if !self.initialized {
            self.mu = stats.mean.clone();
            self.sigma = stats.std.clone();
            self.initialized = true;
            return Ok(());
        }
        check_shapes(stats, self)?;
        let a = self.alpha;
        for (hist, cur) in self.mu.iter_mut().zip(&stats.mean) {
            *hist = cur * a + &*hist * (1.0 - a);
        }
        for (hist, cur) in self.sigma.iter_mut().zip(&stats.std) {
            *hist = cur * a + &*hist * (1.0 - a);
        }
        Ok(())
    }
}

fn check_shapes(stats: &LayerStats, hist: &GlobalStats) -> Result<()> {
    if stats.mean.len() != hist.mu.len() || stats.std.len() != hist.sigma.len() {
        return Err(ForoError::DimensionMismatch {
            context: "layer count",
            expected: hist.mu.len(),
            found: stats.mean.len(),
        });
    }
    for (a, b) in stats
        .mean
        .iter()
        .chain(&stats.std)
        .zip(hist.mu.iter().chain(&hist.sigma))
    {
        if a.len() != b.len() {
            return Err(ForoError::DimensionMismatch {
                context: "layer width",
                expected: b.len(),
                found: a.len(),
            });
        }
    }
    Ok(())
}

/// `Σ_ℓ ‖μ_ℓ − μ_ℓ^G‖₂ + ‖σ_ℓ − σ_ℓ^G‖₂`.
pub fn discrepancy(stats: &LayerStats, hist: &GlobalStats) -> Result<f64> {
    if !hist.initialized {
        return Err(ForoError::UninitializedHistory);
    }
    check_shapes(stats, hist)?;
    let mut total = 0.0;
    for l in 0..hist.mu.len() {
        total += (&stats.mean[l] - &hist.mu[l]).norm();
        total += (&stats.std[l] - &hist.sigma[l]).norm();
    }
    Ok(total)
}

/// Mean negative log-likelihood of the one-hot targets under row softmax.
pub fn cross_entropy(logits: &DMatrix<f64>, targets: &DMatrix<f64>) -> Result<f64> {
    if logits.shape() != targets.shape() {
        return Err(ForoError::DimensionMismatch {
            context: "cross-entropy targets",
            expected: logits.ncols(),
            found: targets.ncols(),
        });
    }
    let (n, c) = logits.shape();
    if c == 0 {
        return Err(ForoError::DimensionMismatch {
            context: "cross-entropy classes",
            expected: 1,
            found: 0,
        });
    }
    if n == 0 {
        return Err(ForoError::EmptyBatch);
    }
    let mut total = 0.0;
    for i in 0..n {
        let row = logits.row(i);
        let max = row.max();
        let log_z = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for k in 0..c {
            let t = targets[(i, k)];
            if t != 0.0 {
                let p = (row[k] - log_z).exp().max(LOG_FLOOR);
                total -= t * p.ln();
            }
        }
    }
    Ok(total / n as f64)
}

/// Minibatch of raw inputs used to score prompts.
#[derive(Debug, Clone, Copy)]
pub struct SampleBatch<'a> {
    pub inputs: &'a [DMatrix<f64>],
    pub labels: &'a [u32],
    /// Classes of the current task, defining the one-hot target columns.
    pub class_ids: &'a [u32],
}

/// Everything a fitness evaluation reads; shared across concurrent candidates.
#[derive(Debug, Clone, Copy)]
pub struct FitnessContext<'a> {
    pub backbone: &'a Backbone,
    pub projection: &'a RandomProjection,
    pub history: &'a GlobalStats,
    pub prompt_rows: usize,
    pub lambda: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitnessBreakdown {
    pub cross_entropy: f64,
    /// Un-weighted discrepancy; zero while the history is empty.
    pub discrepancy: f64,
    pub total: f64,
}

/// Loss of one prompt genome on a minibatch. Lower is better.
pub fn evaluate_candidate(
    genome: &[f64],
    batch: SampleBatch<'_>,
    ctx: FitnessContext<'_>,
) -> Result<FitnessBreakdown> {
    let (features, stats) = evaluate_features(genome, batch, ctx)?;
    let targets = one_hot(batch.labels, batch.class_ids)?;
    let logits = ridge_in_sample_logits(&features, &targets, ctx.gamma)?;
    let ce = cross_entropy(&logits, &targets)?;
    let disc = if ctx.history.is_initialized() {
        discrepancy(&stats, ctx.history)?
    } else {
        0.0
    };
    Ok(FitnessBreakdown {
        cross_entropy: ce,
        discrepancy: disc,
        total: ce + ctx.lambda * disc,
    })
}

fn evaluate_features(
    genome: &[f64],
    batch: SampleBatch<'_>,
    ctx: FitnessContext<'_>,
) -> Result<(DMatrix<f64>, LayerStats)> {
    if batch.inputs.len() != batch.labels.len() {
        return Err(ForoError::DimensionMismatch {
            context: "minibatch labels",
            expected: batch.inputs.len(),
            found: batch.labels.len(),
        });
    }
    let prompts = PromptMatrix::from_genome(genome, ctx.prompt_rows, ctx.backbone.embed_dim())?;
    let (raw, stats) = ctx.backbone.batch_forward(&prompts, batch.inputs)?;
    Ok((ctx.projection.project(&raw)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stats(mean: Vec<Vec<f64>>, std: Vec<Vec<f64>>) -> LayerStats {
        LayerStats {
            mean: mean.into_iter().map(DVector::from_vec).collect(),
            std: std.into_iter().map(DVector::from_vec).collect(),
        }
    }

    #[test]
    fn discrepancy_hand_cases() {
        let s = stats(vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5]]);
        let mut h = GlobalStats::new(0.1).unwrap();
        assert!(matches!(
            discrepancy(&s, &h),
            Err(ForoError::UninitializedHistory)
        ));
        h.update(&s).unwrap();
        assert_eq!(discrepancy(&s, &h).unwrap(), 0.0);

        let mut h0 = GlobalStats::new(0.1).unwrap();
        h0.update(&stats(vec![vec![0.0, 0.0]], vec![vec![0.5, 0.5]]))
            .unwrap();
        assert_eq!(discrepancy(&s, &h0).unwrap(), 1.0);

        let wrong = stats(vec![vec![1.0, 0.0, 0.0]], vec![vec![0.5, 0.5, 0.5]]);
        assert!(discrepancy(&wrong, &h0).is_err());
    }

    #[test]
    fn cross_entropy_hand_cases() {
        let y = DMatrix::from_row_slice(2, 4, &[1., 0., 0., 0., 0., 0., 1., 0.]);
        let uniform = cross_entropy(&DMatrix::zeros(2, 4), &y).unwrap();
        assert!((uniform - 4f64.ln()).abs() < 1e-15);

        let mut confident = DMatrix::zeros(2, 4);
        confident[(0, 0)] = 1e3;
        confident[(1, 2)] = 1e3;
        assert!(cross_entropy(&confident, &y).unwrap() < 1e-12);

        // Confidently wrong saturates at -ln(1e-12).
        let mut wrong = DMatrix::zeros(1, 2);
        wrong[(0, 1)] = 1e4;
        let ce = cross_entropy(&wrong, &DMatrix::from_row_slice(1, 2, &[1., 0.])).unwrap();
        assert!((ce - (-LOG_FLOOR.ln())).abs() < 1e-9);

        assert!(cross_entropy(&DMatrix::zeros(2, 3), &y).is_err());
    }

    #[test]
    fn history_blending() {
        let s1 = stats(vec![vec![1.0, 2.0]], vec![vec![3.0, 4.0]]);
        let s2 = stats(vec![vec![5.0, -1.0]], vec![vec![0.0, 1.0]]);

        let mut full = GlobalStats::new(1.0).unwrap();
        full.update(&s1).unwrap();
        full.update(&s2).unwrap();
        assert_eq!(full.mean(), &s2.mean[..]);
        assert_eq!(full.std(), &s2.std[..]);

        let mut frozen = GlobalStats::new(0.0).unwrap();
        frozen.update(&s1).unwrap();
        frozen.update(&s2).unwrap();
        assert_eq!(frozen.mean(), &s1.mean[..]);

        assert!(GlobalStats::new(1.5).is_err());
    }
}
