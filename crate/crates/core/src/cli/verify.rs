//! Built-in self checks run by `foro verify`.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::cma::{minimize, CmaState};
use crate::encoding::{batch_solve_oracle, one_hot, Classifier, Kem, TaskBatch};
use crate::error::{ForoError, Result};
use crate::linalg::relative_frobenius;
use crate::protocol::{average_accuracy, average_forgetting, AccuracyMatrix};
use crate::seed::rng_from;

/// Bound on the relative Frobenius distance between recursive and batch weights.
pub const EQUIVALENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "[{tag}] {:<32} {}", c.name, c.detail)?;
        }
        Ok(())
    }
}

/// One random stream of feature batches with labels.
pub struct RandomStream {
    pub dim: usize,
    pub batches: Vec<(DMatrix<f64>, Vec<u32>)>,
    pub class_ids: Vec<u32>,
}

/// `tasks` batches of `[5, 50]` Gaussian rows, two fresh classes per batch.
pub fn random_stream(seed: u64, tasks: usize, dim: usize) -> RandomStream {
    let mut rng = rng_from(seed);
    let mut batches = Vec::with_capacity(tasks);
    for t in 0..tasks {
        let n = rng.random_range(5..=50);
        let x = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let labels = (0..n).map(|i| (2 * t + i % 2) as u32).collect();
        batches.push((x, labels));
    }
    RandomStream {
        dim,
        batches,
        class_ids: (0..2 * tasks as u32).collect(),
    }
}

/// Recursive weights after each batch of `order`, in class-incremental fashion.
pub fn recursive_prefixes(
    stream: &RandomStream,
    order: &[usize],
    gamma: f64,
) -> Result<Vec<DMatrix<f64>>> {
    let mut kem = Kem::new(stream.dim, gamma)?;
    let mut clf = Classifier::new(stream.dim);
    let mut out = Vec::with_capacity(order.len());
    for &t in order {
        let (x, labels) = &stream.batches[t];
        let mut fresh: Vec<u32> = labels.clone();
        fresh.sort_unstable();
        fresh.dedup();
        fresh.retain(|c| !clf.class_ids().contains(c));
        clf.extend(&fresh)?;
        let batch = TaskBatch::new(x.clone(), labels.clone(), clf.class_ids())?;
        kem.update(&batch.x)?;
        clf.update(&kem, &batch)?;
        out.push(reorder_columns(
            clf.weights(),
            clf.class_ids(),
            &stream.class_ids,
        ));
    }
    Ok(out)
}

/// Lays out weight columns in `target` class order; absent classes get zeros.
pub fn reorder_columns(w: &DMatrix<f64>, ids: &[u32], target: &[u32]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(w.nrows(), target.len());
    for (k, id) in target.iter().enumerate() {
        if let Some(src) = ids.iter().position(|c| c == id) {
            out.set_column(k, &w.column(src));
        }
    }
    out
}

/// Direct ridge solution on the union of the given batches, columns in stream order.
pub fn batch_prefix_oracle(
    stream: &RandomStream,
    batches: &[usize],
    gamma: f64,
) -> Result<DMatrix<f64>> {
    let rows: usize = batches.iter().map(|&t| stream.batches[t].0.nrows()).sum();
    let mut x = DMatrix::zeros(rows, stream.dim);
    let mut labels = Vec::with_capacity(rows);
    let mut r = 0;
    for &t in batches {
        let (xt, lt) = &stream.batches[t];
        x.rows_mut(r, xt.nrows()).copy_from(xt);
        labels.extend_from_slice(lt);
        r += xt.nrows();
    }
    let y = one_hot(&labels, &stream.class_ids)?;
    batch_solve_oracle(&x, &y, gamma)
}

/// Worst relative error over every prefix of `order`.
pub fn max_prefix_error(stream: &RandomStream, order: &[usize], gamma: f64) -> Result<f64> {
    let rec = recursive_prefixes(stream, order, gamma)?;
    let mut worst = 0.0f64;
    for (k, w) in rec.iter().enumerate() {
        let oracle = batch_prefix_oracle(stream, &order[..=k], gamma)?;
        worst = worst.max(relative_frobenius(w, &oracle));
    }
    Ok(worst)
}

pub fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn rosenbrock(x: &[f64]) -> f64 {
    x.windows(2)
        .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
        .sum()
}

fn equivalence_check(streams: usize, gamma: f64) -> Result<Check> {
    let mut worst = 0.0f64;
    for s in 0..streams {
        let dim = if s % 2 == 0 { 16 } else { 64 };
        let stream = random_stream(1000 + s as u64, 5, dim);
        worst = worst.max(max_prefix_error(&stream, &[0, 1, 2, 3, 4], gamma)?);
    }
    Ok(Check {
        name: "recursive-batch equivalence",
        passed: worst <= EQUIVALENCE_TOL,
        detail: format!("{streams} streams, max relative Frobenius error {worst:.3e}"),
    })
}

fn permutation_check(gamma: f64) -> Result<Check> {
    let stream = random_stream(77, 5, 32);
    let mut worst = 0.0f64;
    for order in [[4, 3, 2, 1, 0], [2, 0, 4, 1, 3], [1, 3, 0, 4, 2]] {
        worst = worst.max(max_prefix_error(&stream, &order, gamma)?);
    }
    Ok(Check {
        name: "permutation equivalence",
        passed: worst <= EQUIVALENCE_TOL,
        detail: format!("3 orders, max relative Frobenius error {worst:.3e}"),
    })
}

fn sphere_check() -> Result<Check> {
    let mut state = CmaState::new(10, 10, 1)?;
    state.set_mean(DVector::from_element(10, 3.0))?;
    let (best, _) = minimize(&mut state, &mut rng_from(1), 300, sphere)?;
    Ok(Check {
        name: "cma-es sphere (n=10, K=10)",
        passed: best.fitness < 1e-10,
        detail: format!("best {:.3e} after 300 generations", best.fitness),
    })
}

fn rosenbrock_check() -> Result<Check> {
    let mut state = CmaState::new(5, 12, 2)?;
    let (best, _) = minimize(&mut state, &mut rng_from(2), 3000, rosenbrock)?;
    Ok(Check {
        name: "cma-es rosenbrock (n=5, K=12)",
        passed: best.fitness < 1e-6,
        detail: format!("best {:.3e} after 3000 generations", best.fitness),
    })
}

fn metric_check() -> Result<Check> {
    let m = AccuracyMatrix::from_counts(&[&[(9, 10)], &[(8, 10), (9, 10)]])?;
    let f = average_forgetting(&m, 2)?;
    let a = average_accuracy(&m, 2)?;
    Ok(Check {
        name: "metric hand cases",
        passed: f == 0.1 && a == 0.85,
        detail: format!("forgetting {f}, average accuracy {a}"),
    })
}

/// Runs the oracle suite. `fast` trims the stream count and skips Rosenbrock.
pub fn verify(fast: bool, gamma: f64) -> Result<VerifyReport> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ForoError::NonpositiveGamma(gamma));
    }
    let mut checks = vec![
        equivalence_check(if fast { 4 } else { 20 }, gamma)?,
        permutation_check(gamma)?,
        sphere_check()?,
    ];
    if !fast {
        checks.push(rosenbrock_check()?);
    }
    checks.push(metric_check()?);
    Ok(VerifyReport { checks })
}
