use nalgebra::DMatrix;

use super::kem::Kem;
use crate::error::{ForoError, Result};
use crate::linalg::ridge_weights;

/// Projected features of one task together with one-hot targets.
#[derive(Debug, Clone)]
pub struct TaskBatch {
    /// `n × M` projected features.
    pub x: DMatrix<f64>,
    /// `n × c` one-hot targets over the classifier's class ids.
    pub y: DMatrix<f64>,
    pub labels: Vec<u32>,
}

impl TaskBatch {
    /// Builds one-hot targets against `class_ids`. Every label must be present.
    pub fn new(x: DMatrix<f64>, labels: Vec<u32>, class_ids: &[u32]) -> Result<Self> {
        if x.nrows() != labels.len() {
            return Err(ForoError::DimensionMismatch {
                context: "batch labels",
                expected: x.nrows(),
                found: labels.len(),
            });
        }
        let y = one_hot(&labels, class_ids)?;
        Ok(Self { x, y, labels })
    }
}

/// `n × c` 0/1 matrix with a single one per row at the label's column.
pub fn one_hot(labels: &[u32], class_ids: &[u32]) -> Result<DMatrix<f64>> {
    let mut y = DMatrix::zeros(labels.len(), class_ids.len());
    for (i, label) in labels.iter().enumerate() {
        let col = class_ids
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| ForoError::InvalidSpec(format!("label {label} is not a known class")))?;
        y[(i, col)] = 1.0;
    }
    Ok(y)
}

/// Linear head over projected features with growable class columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    w: DMatrix<f64>,
    class_ids: Vec<u32>,
}

impl Classifier {
    /// Zero classes before the first task.
    pub fn new(dim: usize) -> Self {
        Self {
            w: DMatrix::zeros(dim, 0),
            class_ids: Vec::new(),
        }
    }

    pub fn from_parts(w: DMatrix<f64>, class_ids: Vec<u32>) -> Result<Self> {
        if w.ncols() != class_ids.len() {
            return Err(ForoError::DimensionMismatch {
                context: "classifier columns",
                expected: class_ids.len(),
                found: w.ncols(),
            });
        }
        Ok(Self { w, class_ids })
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn class_ids(&self) -> &[u32] {
        &self.class_ids
    }

    pub fn num_classes(&self) -> usize {
        self.class_ids.len()
    }

    /// Appends a zero column per new class. Existing columns are untouched.
    pub fn extend(&mut self, new_ids: &[u32]) -> Result<()> {
        for (i, id) in new_ids.iter().enumerate() {
            if self.class_ids.contains(id) || new_ids[..i].contains(id) {
                return Err(ForoError::DuplicateClass(*id));
            }
        }
        if new_ids.is_empty() {
            return Ok(());
        }
        let old = self.w.ncols();
        let w = std::mem::replace(&mut self.w, DMatrix::zeros(0, 0));
        self.w = w.resize_horizontally(old + new_ids.len(), 0.0);
        self.class_ids.extend_from_slice(new_ids);
        Ok(())
    }

    /// `Ŵ ← Ŵ + R Xᵀ (Y − X Ŵ)`.
    ///
    /// `kem` must already have absorbed `batch.x`; the caller is responsible
    /// for that ordering since it cannot be observed here.
    pub fn update(&mut self, kem: &Kem, batch: &TaskBatch) -> Result<()> {
        if batch.x.ncols() != self.dim() || kem.dim() != self.dim() {
            return Err(ForoError::DimensionMismatch {
                context: "classifier update features",
                expected: self.dim(),
                found: batch.x.ncols(),
            });
        }
        if batch.y.ncols() != self.num_classes() {
            return Err(ForoError::DimensionMismatch {
                context: "classifier update targets",
                expected: self.num_classes(),
                found: batch.y.ncols(),
            });
        }
        if batch.x.nrows() == 0 {
            return Ok(());
        }
        let residual = &batch.y - &batch.x * &self.w;
        let correction = kem.r() * (batch.x.transpose() * residual);
        self.w += correction;
        Ok(())
    }

    /// Overwrites the columns of `ids` with a ridge fit on this batch alone.
    pub fn fit_columns(
        &mut self,
        ids: &[u32],
        x: &DMatrix<f64>,
        labels: &[u32],
        gamma: f64,
    ) -> Result<()> {
        let y = one_hot(labels, ids)?;
        let w = ridge_weights(x, &y, gamma)?;
        for (k, id) in ids.iter().enumerate() {
            let col =
                self.class_ids.iter().position(|c| c == id).ok_or_else(|| {
                    ForoError::InvalidSpec(format!("class {id} not in classifier"))
                })?;
            self.w.set_column(col, &w.column(k));
        }
        Ok(())
    }

    pub fn logits(&self, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if h.ncols() != self.dim() {
            return Err(ForoError::DimensionMismatch {
                context: "predict features",
                expected: self.dim(),
                found: h.ncols(),
            });
        }
        Ok(h * &self.w)
    }

    /// Logits plus the argmax class id per row; ties go to the lowest class id.
    pub fn predict(&self, h: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<u32>)> {
        let logits = self.logits(h)?;
        if self.class_ids.is_empty() {
            return Err(ForoError::InvalidSpec("classifier has no classes".into()));
        }
        let preds = (0..logits.nrows())
            .map(|i| {
                let mut best = 0;
                for k in 1..self.class_ids.len() {
                    let (v, b) = (logits[(i, k)], logits[(i, best)]);
                    if v > b || (v == b && self.class_ids[k] < self.class_ids[best]) {
                        best = k;
                    }
                }
                self.class_ids[best]
            })
            .collect();
        Ok((logits, preds))
    }
}

/// Direct batch ridge solution `(XᵀX + γI)⁻¹ XᵀY`.
pub fn batch_solve_oracle(x: &DMatrix<f64>, y: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    ridge_weights(x, y, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extend_appends_zero_columns() {
        let mut c =
            Classifier::from_parts(DMatrix::from_element(3, 4, 0.5), vec![0, 1, 2, 3]).unwrap();
        let before = c.clone();
        c.extend(&[]).unwrap();
        assert_eq!(c, before);
        c.extend(&[7, 9]).unwrap();
        assert_eq!(c.num_classes(), 6);
        assert_eq!(c.weights().columns(0, 4), before.weights().columns(0, 4));
        assert!(c.weights().columns(4, 2).iter().all(|v| *v == 0.0));

        let h = DMatrix::from_fn(2, 3, |i, j| (i + j) as f64 - 1.3);
        let old = before.logits(&h).unwrap();
        let new = c.logits(&h).unwrap();
        assert_eq!(new.columns(0, 4), old.columns(0, 4));
    }

    #[test]
    fn extend_rejects_duplicates() {
        let mut c = Classifier::new(2);
        c.extend(&[1, 2]).unwrap();
        assert!(matches!(c.extend(&[2]), Err(ForoError::DuplicateClass(2))));
        assert!(matches!(
            c.extend(&[5, 5]),
            Err(ForoError::DuplicateClass(5))
        ));
    }

    #[test]
    fn zero_residual_is_fixed_point() {
        let w = DMatrix::from_fn(3, 2, |i, j| (i * 2 + j) as f64 * 0.1);
        let mut c = Classifier::from_parts(w.clone(), vec![0, 1]).unwrap();
        let x = DMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64));
        let y = &x * &w;
        let mut kem = Kem::new(3, 1.0).unwrap();
        kem.update(&x).unwrap();
        c.update(
            &kem,
            &TaskBatch {
                x,
                y,
                labels: vec![0; 4],
            },
        )
        .unwrap();
        assert!((c.weights() - w).amax() < 1e-14);
    }

    #[test]
    fn empty_batch_keeps_weights() {
        let mut c = Classifier::from_parts(DMatrix::from_element(2, 1, 3.0), vec![4]).unwrap();
        let kem = Kem::new(2, 1.0).unwrap();
        let before = c.clone();
        let batch = TaskBatch::new(DMatrix::zeros(0, 2), vec![], &[4]).unwrap();
        c.update(&kem, &batch).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn predict_tie_rules() {
        let mut c = Classifier::new(3);
        c.extend(&[5, 2, 8]).unwrap();
        let (logits, preds) = c.predict(&DMatrix::from_element(2, 3, 1.0)).unwrap();
        assert!(logits.iter().all(|v| *v == 0.0));
        assert_eq!(preds, vec![2, 2]);

        let mut single = Classifier::new(2);
        single.extend(&[11]).unwrap();
        let (_, p) = single.predict(&DMatrix::from_element(3, 2, -1.0)).unwrap();
        assert_eq!(p, vec![11, 11, 11]);
    }

    #[test]
    fn oracle_hand_cases() {
        let w =
            batch_solve_oracle(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), 1.0).unwrap();
        assert!((w - DMatrix::identity(3, 3) * 0.5).amax() < 1e-15);
        let empty = batch_solve_oracle(&DMatrix::zeros(0, 4), &DMatrix::zeros(0, 2), 0.1).unwrap();
        assert_eq!(empty, DMatrix::zeros(4, 2));
    }

    #[test]
    fn one_hot_rejects_unknown_label() {
        assert!(one_hot(&[3], &[1, 2]).is_err());
        assert_eq!(
            one_hot(&[2, 1], &[1, 2]).unwrap(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
    }
}
