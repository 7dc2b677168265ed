//! Externally extracted feature streams.
//!
//! A stream is a JSON manifest listing one entry per task:
//!
//! ```json
//! {"tasks": [{"task_id": 0, "class_ids": [0, 1],
//!             "train_file": "t0_train.feat", "test_file": "t0_test.feat",
//!             "sha256": "<hex digest of train bytes followed by test bytes>"}]}
//! ```
//!
//! A bare top-level array of entries is accepted as well. File paths are
//! relative to the manifest's directory.
//!
//! Feature files are little-endian: magic `b"FOROFEAT"`, version `u16` (= 1),
//! `n: u32`, `d: u32`, `n·d` `f32` values row-major, then `n` `u32` labels.

use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::stream::{Inputs, Split, StreamMode, Task, TaskStream};
use crate::error::{ForoError, Result};
use crate::io::write_atomic;

pub const MAGIC: &[u8; 8] = b"FOROFEAT";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 8 + 2 + 4 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub dim: usize,
    /// Row-major `n × dim`.
    pub values: Vec<f32>,
    pub labels: Vec<u32>,
}

impl FeatureFile {
    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.values.len() + self.labels.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in &self.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let malformed = |reason: String| ForoError::MalformedFeatureFile {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < HEADER_LEN {
            return Err(malformed("shorter than the header".into()));
        }
        if &bytes[..8] != MAGIC {
            return Err(malformed("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        let n = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
        let expected = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_add(n))
            .and_then(|w| w.checked_mul(4))
            .and_then(|b| b.checked_add(HEADER_LEN))
            .ok_or_else(|| malformed("size overflow".into()))?;
        if bytes.len() != expected {
            return Err(malformed(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let body = &bytes[HEADER_LEN..];
        let (vals, labs) = body.split_at(4 * n * d);
        let word = |c: &[u8]| -> [u8; 4] { c.try_into().unwrap() };
        let values: Vec<f32> = vals
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(word(c)))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(malformed("non-finite feature value".into()));
        }
        Ok(Self {
            dim: d,
            values,
            labels: labs
                .chunks_exact(4)
                .map(|c| u32::from_le_bytes(word(c)))
                .collect(),
        })
    }

    pub fn from_matrix(features: &DMatrix<f64>, labels: Vec<u32>) -> Self {
        let mut values = Vec::with_capacity(features.len());
        for i in 0..features.nrows() {
            values.extend(features.row(i).iter().map(|v| *v as f32));
        }
        Self {
            dim: features.ncols(),
            values,
            labels,
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_iterator(
            self.rows(),
            self.dim,
            self.values.iter().map(|v| f64::from(*v)),
        )
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&read_file(path)?, path)
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => ForoError::MissingFile(path.to_path_buf()),
        _ => ForoError::Io(e),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub task_id: u32,
    pub class_ids: Vec<u32>,
    pub train_file: String,
    pub test_file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tasks: Vec<ManifestEntry>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ManifestDoc {
    Object(Manifest),
    List(Vec<ManifestEntry>),
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Ok(match serde_json::from_slice::<ManifestDoc>(&bytes)? {
            ManifestDoc::Object(m) => m,
            ManifestDoc::List(tasks) => Manifest { tasks },
        })
    }
}

/// Hex SHA-256 of the train file bytes followed by the test file bytes.
pub fn task_checksum(train: &[u8], test: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(train);
    h.update(test);
    hex::encode(h.finalize())
}

/// A task's payload as it appears on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTask {
    pub task_id: u32,
    pub class_ids: Vec<u32>,
    pub train: FeatureFile,
    pub test: FeatureFile,
}

/// Loads and validates a manifest plus every file it references.
pub fn load_feature_tasks(manifest_path: &Path) -> Result<Vec<FeatureTask>> {
    let manifest = Manifest::read(manifest_path)?;
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    manifest
        .tasks
        .iter()
        .map(|entry| {
            let train_path = base.join(&entry.train_file);
            let test_path = base.join(&entry.test_file);
            let train_bytes = read_file(&train_path)?;
            let test_bytes = read_file(&test_path)?;
            let actual = task_checksum(&train_bytes, &test_bytes);
            if !actual.eq_ignore_ascii_case(&entry.sha256) {
                return Err(ForoError::ChecksumMismatch {
                    task_id: entry.task_id,
                    expected: entry.sha256.clone(),
                    actual,
                });
            }
            Ok(FeatureTask {
                task_id: entry.task_id,
                class_ids: entry.class_ids.clone(),
                train: FeatureFile::from_bytes(&train_bytes, &train_path)?,
                test: FeatureFile::from_bytes(&test_bytes, &test_path)?,
            })
        })
        .collect()
}

/// Loads a feature-file stream for knowledge-encoding-only learning.
pub fn load_feature_stream(manifest_path: &Path) -> Result<TaskStream> {
    let tasks = load_feature_tasks(manifest_path)?
        .into_iter()
        .map(|t| {
            let split = |f: &FeatureFile| Split {
                inputs: Inputs::Features(f.to_matrix()),
                labels: f.labels.clone(),
            };
            Task::new(
                t.task_id,
                t.class_ids.clone(),
                split(&t.train),
                split(&t.test),
            )
        })
        .collect();
    let stream = TaskStream {
        tasks,
        mode: StreamMode::FeatureFile,
    };
    stream.validate()?;
    let dim = match stream.input_shape()? {
        super::stream::InputShape::Features { dim } => dim,
        _ => unreachable!("feature files only hold feature rows"),
    };
    if dim == 0 {
        return Err(ForoError::InvalidSpec("feature width is zero".into()));
    }
    Ok(stream)
}

/// Writes `tasks` as feature files plus `manifest.json` under `dir` and
/// returns the manifest path. File names are `task{id}_{train,test}.feat`.
pub fn write_feature_stream(dir: &Path, tasks: &[FeatureTask]) -> Result<PathBuf> {
    let mut entries = Vec::with_capacity(tasks.len());
    for t in tasks {
        let train_file = format!("task{}_train.feat", t.task_id);
        let test_file = format!("task{}_test.feat", t.task_id);
        let train = t.train.to_bytes();
        let test = t.test.to_bytes();
        write_atomic(&dir.join(&train_file), &train)?;
        write_atomic(&dir.join(&test_file), &test)?;
        entries.push(ManifestEntry {
            task_id: t.task_id,
            class_ids: t.class_ids.clone(),
            train_file,
            test_file,
            sha256: task_checksum(&train, &test),
        });
    }
    let path = dir.join("manifest.json");
    let doc = serde_json::to_vec_pretty(&Manifest { tasks: entries })?;
    write_atomic(&path, &doc)?;
    Ok(path)
}
