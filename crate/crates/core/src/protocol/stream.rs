use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::DMatrix;

use crate::error::{ForoError, Result};

/// Sample inputs of one split.
#[derive(Debug, Clone, PartialEq)]
pub enum Inputs {
    /// One `m × d` patch-embedding grid per sample; fed through the backbone.
    Patches(Vec<DMatrix<f64>>),
    /// One precomputed feature row per sample (`n × d`).
    Features(DMatrix<f64>),
}

impl Inputs {
    pub fn len(&self) -> usize {
        match self {
            Inputs::Patches(p) => p.len(),
            Inputs::Features(f) => f.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn shape(&self) -> InputShape {
        match self {
            Inputs::Patches(p) => match p.first() {
                Some(m) => InputShape::Patches {
                    patches: m.nrows(),
                    dim: m.ncols(),
                },
                None => InputShape::Patches { patches: 0, dim: 0 },
            },
            Inputs::Features(f) => InputShape::Features { dim: f.ncols() },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputShape {
    Patches { patches: usize, dim: usize },
    Features { dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub inputs: Inputs,
    pub labels: Vec<u32>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// One task: a disjoint class set with its train and test samples.
///
/// Training data is only reachable through [`Task::train`], which counts
/// every access; the driver uses the counter to prove no replay happened.
#[derive(Debug)]
pub struct Task {
    pub task_id: u32,
    pub class_ids: Vec<u32>,
    train: Split,
    pub test: Split,
    train_reads: AtomicUsize,
}

impl Task {
    pub fn new(task_id: u32, class_ids: Vec<u32>, train: Split, test: Split) -> Self {
        Self {
            task_id,
            class_ids,
            train,
            test,
            train_reads: AtomicUsize::new(0),
        }
    }

    pub fn train(&self) -> &Split {
        self.train_reads.fetch_add(1, Ordering::Relaxed);
        &self.train
    }

    pub fn train_reads(&self) -> usize {
        self.train_reads.load(Ordering::Relaxed)
    }
}

impl Clone for Task {
    fn clone(&self) -> Self {
        Self::new(
            self.task_id,
            self.class_ids.clone(),
            self.train.clone(),
            self.test.clone(),
        )
    }
}

impl PartialEq for Task {
    fn eq(&self, other: &Self) -> bool {
        self.task_id == other.task_id
            && self.class_ids == other.class_ids
            && self.train == other.train
            && self.test == other.test
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    Synthetic,
    FeatureFile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub mode: StreamMode,
}

impl TaskStream {
    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn total_classes(&self) -> usize {
        self.tasks.iter().map(|t| t.class_ids.len()).sum()
    }

    /// Shape shared by every split of the stream.
    pub fn input_shape(&self) -> Result<InputShape> {
        let first = self
            .tasks
            .first()
            .ok_or_else(|| ForoError::InvalidSpec("stream has no tasks".into()))?;
        Ok(first.train.inputs.shape())
    }

    /// Checks the class-incremental contract: disjoint class sets, labels
    /// inside their task's set, and one input shape throughout.
    pub fn validate(&self) -> Result<()> {
        let shape = self.input_shape()?;
        let mut seen = HashSet::new();
        for task in &self.tasks {
            let mut own = HashSet::new();
            for &c in &task.class_ids {
                if !seen.insert(c) {
                    return Err(ForoError::OverlappingClasses { class: c });
                }
                own.insert(c);
            }
            for split in [&task.train, &task.test] {
                if split.inputs.len() != split.labels.len() {
                    return Err(ForoError::InvalidSpec(format!(
                        "task {}: {} inputs but {} labels",
                        task.task_id,
                        split.inputs.len(),
                        split.labels.len()
                    )));
                }
                if let Some(bad) = split.labels.iter().find(|l| !own.contains(l)) {
                    return Err(ForoError::InvalidSpec(format!(
                        "task {}: label {bad} outside its class set",
                        task.task_id
                    )));
                }
                if !split.is_empty() && split.inputs.shape() != shape {
                    return Err(ForoError::InvalidSpec(format!(
                        "task {}: input shape differs from the first task",
                        task.task_id
                    )));
                }
            }
        }
        Ok(())
    }
}
