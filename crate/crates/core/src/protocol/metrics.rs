//! Accuracy bookkeeping for class-incremental runs.
//!
//! Accuracies are kept as exact fractions `correct / total` and the summary
//! metrics are computed in rational arithmetic, so the reported averages are
//! the correctly rounded values of the exact averages.

use num_rational::Ratio;

use crate::error::{ForoError, Result};

pub type Fraction = Ratio<i128>;

fn to_f64(r: &Fraction) -> f64 {
    // Both parts stay below 2^53 at any realistic test-set size, making this
    // a single correctly rounded division.
    *r.numer() as f64 / *r.denom() as f64
}

/// Lower-triangular grid; `row(j)[t]` is the accuracy on task `t` after
/// learning `j + 1` tasks (both zero-based here).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyMatrix {
    rows: Vec<Vec<Fraction>>,
}

impl AccuracyMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a matrix from `(correct, total)` pairs.
    pub fn from_counts(rows: &[&[(u64, u64)]]) -> Result<Self> {
        let mut m = Self::new();
        for row in rows {
            m.push_row(
                row.iter()
                    .map(|&(c, n)| accuracy(c, n))
                    .collect::<Result<_>>()?,
            )?;
        }
        Ok(m)
    }

    pub fn push_row(&mut self, row: Vec<Fraction>) -> Result<()> {
        if row.len() != self.rows.len() + 1 {
            return Err(ForoError::IncompleteMatrix(format!(
                "row {} must have {} entries, got {}",
                self.rows.len() + 1,
                self.rows.len() + 1,
                row.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Number of completed rows.
    pub fn tasks(&self) -> usize {
        self.rows.len()
    }

    /// Accuracy on task `t` after learning `j` tasks, both one-based.
    pub fn get(&self, j: usize, t: usize) -> Option<f64> {
        if t == 0 || t > j {
            return None;
        }
        self.rows.get(j - 1).and_then(|r| r.get(t - 1)).map(to_f64)
    }

    pub fn fraction(&self, j: usize, t: usize) -> Option<Fraction> {
        if t == 0 || t > j {
            return None;
        }
        self.rows.get(j - 1).and_then(|r| r.get(t - 1)).copied()
    }

    /// `(j, t, accuracy)` triples in row order, one-based.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows.iter().enumerate().flat_map(|(j, row)| {
            row.iter()
                .enumerate()
                .map(move |(t, a)| (j + 1, t + 1, to_f64(a)))
        })
    }

    /// CSV with header `j,t,accuracy`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("j,t,accuracy\n");
        for (j, t, a) in self.entries() {
            out.push_str(&format!("{j},{t},{a}\n"));
        }
        out
    }
}

/// Exact-match accuracy as a fraction.
pub fn accuracy(correct: u64, total: u64) -> Result<Fraction> {
    if total == 0 {
        return Err(ForoError::IncompleteMatrix(
            "accuracy over zero samples".into(),
        ));
    }
    if correct > total {
        return Err(ForoError::IncompleteMatrix(format!(
            "{correct} correct out of {total}"
        )));
    }
    Ok(Fraction::new(correct as i128, total as i128))
}

/// `Ā_T = (1/T) Σ_t a[T][t]`.
pub fn average_accuracy(matrix: &AccuracyMatrix, tasks: usize) -> Result<f64> {
    if tasks == 0 || matrix.tasks() < tasks {
        return Err(ForoError::IncompleteMatrix(format!(
            "need {tasks} rows, have {}",
            matrix.tasks()
        )));
    }
    let row = &matrix.rows[tasks - 1];
    let sum = row.iter().fold(Fraction::from_integer(0), |acc, a| acc + a);
    Ok(to_f64(&(sum / Fraction::from_integer(tasks as i128))))
}

/// Mean over tasks `t < T` of the drop from the best earlier accuracy
/// `max_{t ≤ j < T} a[j][t]` to the final accuracy `a[T][t]`; zero for `T = 1`.
/// Negative values (backward transfer) are reported as computed.
pub fn average_forgetting(matrix: &AccuracyMatrix, tasks: usize) -> Result<f64> {
    if tasks == 0 || matrix.tasks() < tasks {
        return Err(ForoError::IncompleteMatrix(format!(
            "need {tasks} rows, have {}",
            matrix.tasks()
        )));
    }
    if tasks == 1 {
        return Ok(0.0);
    }
    let last = &matrix.rows[tasks - 1];
    let mut sum = Fraction::from_integer(0);
    for t in 0..tasks - 1 {
        let peak = (t..tasks - 1)
            .map(|j| matrix.rows[j][t] - last[t])
            .max()
            .expect("non-empty range");
        sum += peak;
    }
    Ok(to_f64(&(sum / Fraction::from_integer(tasks as i128 - 1))))
}
