//! Seeded Gaussian-cluster task streams.
//!
//! Every class gets a mean drawn with per-coordinate scale `separation`;
//! samples add isotropic noise with standard deviation `cluster_std`. Inputs
//! of task `t` (one-based) are offset by `t · shift` along a fixed random
//! unit direction (one unit direction per patch row for patch grids), which
//! models the distribution drift between tasks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::stream::{Inputs, Split, StreamMode, Task, TaskStream};
use crate::error::{ForoError, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputKind {
    /// `patches × dim` grids for the full prompt-search pipeline.
    #[default]
    Patches,
    /// Plain `dim`-wide vectors for knowledge-encoding-only runs.
    Features,
    /// Two-class XOR: four 2-d clusters at `(±separation, ±separation)`,
    /// labelled by the sign of the coordinate product.
    Xor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub tasks: usize,
    pub classes_per_task: usize,
    /// When set, classes are split evenly with the remainder in the last task.
    pub total_classes: Option<usize>,
    pub input: InputKind,
    pub dim: usize,
    pub patches: usize,
    pub separation: f64,
    pub cluster_std: f64,
    pub shift: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Data seed; derived from the experiment seed when absent.
    pub seed: Option<u64>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            tasks: 5,
            classes_per_task: 4,
            total_classes: None,
            input: InputKind::Patches,
            dim: 16,
            patches: 8,
            separation: 1.0,
            cluster_std: 1.0,
            shift: 0.0,
            train_per_class: 50,
            test_per_class: 25,
            seed: None,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ForoError::InvalidSpec(m.to_string()));
        if self.tasks == 0 {
            return bad("tasks must be at least 1");
        }
        if self.classes_per_task == 0 && self.total_classes.is_none() {
            return bad("classes_per_task must be at least 1");
        }
        if let Some(total) = self.total_classes {
            if total < self.tasks {
                return bad("total_classes must give every task at least one class");
            }
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return bad("separation must be positive");
        }
        if !(self.cluster_std >= 0.0 && self.cluster_std.is_finite()) {
            return bad("cluster_std must be non-negative");
        }
        if !(self.shift >= 0.0 && self.shift.is_finite()) {
            return bad("shift must be non-negative");
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return bad("train_per_class and test_per_class must be positive");
        }
        match self.input {
            InputKind::Xor => {
                if self.tasks != 1 || self.class_count(0) != 2 {
                    return bad("xor streams have exactly one task with two classes");
                }
            }
            InputKind::Features => {
                if self.dim == 0 {
                    return bad("dim must be positive");
                }
            }
            InputKind::Patches => {
                if self.dim == 0 || self.patches == 0 {
                    return bad("dim and patches must be positive");
                }
            }
        }
        Ok(())
    }

    fn class_count(&self, task: usize) -> usize {
        match self.total_classes {
            None => self.classes_per_task,
            Some(total) => {
                let base = total / self.tasks;
                if task + 1 == self.tasks {
                    base + total % self.tasks
                } else {
                    base
                }
            }
        }
    }

    fn seed_or(&self, fallback: u64) -> u64 {
        self.seed.unwrap_or(fallback)
    }
}

fn normal_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            let z: f64 = rng.sample(StandardNormal);
            m[(i, j)] = scale * z;
        }
    }
    m
}

/// Generates the stream. `fallback_seed` is used when the spec has no seed.
pub fn generate_synthetic(spec: &SyntheticSpec, fallback_seed: u64) -> Result<TaskStream> {
    spec.validate()?;
    let mut rng = rng_from(spec.seed_or(fallback_seed));
    if spec.input == InputKind::Xor {
        return Ok(generate_xor(spec, &mut rng));
    }

    let rows = match spec.input {
        InputKind::Patches => spec.patches,
        _ => 1,
    };
    let d = spec.dim;
    // Unit drift direction per row.
    let mut drift = normal_matrix(&mut rng, rows, d, 1.0);
    for mut r in drift.row_iter_mut() {
        let norm = r.norm();
        if norm > 0.0 {
            r /= norm;
        }
    }

    let mut tasks = Vec::with_capacity(spec.tasks);
    let mut next_class = 0u32;
    for t in 0..spec.tasks {
        let offset = &drift * ((t + 1) as f64 * spec.shift);
        let class_ids: Vec<u32> = (0..spec.class_count(t) as u32)
            .map(|k| next_class + k)
            .collect();
        next_class += class_ids.len() as u32;

        let mut train = Vec::new();
        let mut test = Vec::new();
        let (mut train_labels, mut test_labels) = (Vec::new(), Vec::new());
        for &class in &class_ids {
            let mean = normal_matrix(&mut rng, rows, d, spec.separation) + &offset;
            for _ in 0..spec.train_per_class {
                train.push(&mean + normal_matrix(&mut rng, rows, d, spec.cluster_std));
                train_labels.push(class);
            }
            for _ in 0..spec.test_per_class {
                test.push(&mean + normal_matrix(&mut rng, rows, d, spec.cluster_std));
                test_labels.push(class);
            }
        }
        let pack = |samples: Vec<DMatrix<f64>>| match spec.input {
            InputKind::Patches => Inputs::Patches(samples),
            _ => Inputs::Features(stack_rows(&samples, d)),
        };
        tasks.push(Task::new(
            t as u32,
            class_ids,
            Split {
                inputs: pack(train),
                labels: train_labels,
            },
            Split {
                inputs: pack(test),
                labels: test_labels,
            },
        ));
    }
    Ok(TaskStream {
        tasks,
        mode: StreamMode::Synthetic,
    })
}

fn stack_rows(samples: &[DMatrix<f64>], d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(samples.len(), d);
    for (i, s) in samples.iter().enumerate() {
        out.row_mut(i).copy_from(&s.row(0));
    }
    out
}

fn generate_xor(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> TaskStream {
    let s = spec.separation;
    // Class 0: same-sign quadrants; class 1: opposite-sign quadrants.
    let centers = [[(s, s), (-s, -s)], [(s, -s), (-s, s)]];
    let draw = |per_class: usize, rng: &mut ChaCha8Rng| {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (class, quads) in centers.iter().enumerate() {
            for k in 0..per_class {
                let (cx, cy) = quads[k % 2];
                let nx: f64 = rng.sample(StandardNormal);
                let ny: f64 = rng.sample(StandardNormal);
                rows.push([cx + spec.cluster_std * nx, cy + spec.cluster_std * ny]);
                labels.push(class as u32);
            }
        }
        let x = DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j]);
        Split {
            inputs: Inputs::Features(x),
            labels,
        }
    };
    let train = draw(spec.train_per_class, rng);
    let test = draw(spec.test_per_class, rng);
    TaskStream {
        tasks: vec![Task::new(0, vec![0, 1], train, test)],
        mode: StreamMode::Synthetic,
    }
}
