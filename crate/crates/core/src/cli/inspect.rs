use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::encoding::Checkpoint;
use crate::error::Result;

/// Above this size the condition number is estimated by power iteration.
const EXACT_EIGEN_LIMIT: usize = 1024;

#[derive(Debug, Clone)]
pub struct InspectReport {
    pub dim: usize,
    pub class_ids: Vec<u32>,
    pub gamma: f64,
    pub samples_seen: u64,
    pub condition_estimate: f64,
    pub column_norms: Vec<f64>,
}

fn power_iteration(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 * 0.1);
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        lambda = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
    }
    lambda
}

/// `λ_max / λ_min` of a symmetric positive-definite matrix.
pub fn condition_estimate(r: &DMatrix<f64>) -> f64 {
    if r.nrows() == 0 {
        return 1.0;
    }
    let (lo, hi) = if r.nrows() <= EXACT_EIGEN_LIMIT {
        let e = SymmetricEigen::new(r.clone()).eigenvalues;
        (e.min(), e.max())
    } else {
        let hi = power_iteration(r, 200);
        let shifted = DMatrix::identity(r.nrows(), r.nrows()) * hi - r;
        (hi - power_iteration(&shifted, 200), hi)
    };
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

pub fn inspect(path: &Path) -> Result<InspectReport> {
    let ck = Checkpoint::load(path)?;
    let w = ck.classifier.weights();
    Ok(InspectReport {
        dim: ck.kem.dim(),
        class_ids: ck.classifier.class_ids().to_vec(),
        gamma: ck.kem.gamma(),
        samples_seen: ck.kem.samples_seen(),
        condition_estimate: condition_estimate(ck.kem.r()),
        column_norms: (0..w.ncols()).map(|k| w.column(k).norm()).collect(),
    })
}

impl fmt::Display for InspectReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "feature dim (M): {}", self.dim)?;
        writeln!(f, "classes:         {}", self.class_ids.len())?;
        writeln!(f, "class ids:       {:?}", self.class_ids)?;
        writeln!(f, "gamma:           {}", self.gamma)?;
        writeln!(f, "samples seen:    {}", self.samples_seen)?;
        writeln!(f, "cond(R) approx:  {:.6e}", self.condition_estimate)?;
        writeln!(f, "W column norms:")?;
        for (id, n) in self.class_ids.iter().zip(&self.column_norms) {
            writeln!(f, "  {id:>6}  {n:.6e}")?;
        }
        Ok(())
    }
}
