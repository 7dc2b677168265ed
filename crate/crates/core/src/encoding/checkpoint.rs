//! Binary checkpoint of the knowledge encoding matrix and classifier.
//!
//! Layout, all little-endian:
//!
//! | field        | type                  |
//! |--------------|-----------------------|
//! | magic        | `b"FOROCKPT"`         |
//! | version      | u16 (= 1)             |
//! | M            | u32                   |
//! | c            | u32                   |
//! | class_ids    | c × u32               |
//! | gamma        | f64                   |
//! | samples_seen | u64                   |
//! | R            | M × M f64, row-major  |
//! | W            | M × c f64, row-major  |

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use super::{Classifier, Kem};
use crate::error::{ForoError, Result};

pub const MAGIC: &[u8; 8] = b"FOROCKPT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kem: Kem,
    pub classifier: Classifier,
}

fn put_matrix(out: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.buf.len())
            .ok_or_else(|| {
                ForoError::CorruptCheckpoint(format!("truncated while reading {what}"))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<DMatrix<f64>> {
        let bytes = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| ForoError::CorruptCheckpoint(format!("{what} size overflows")))?;
        let raw = self.take(bytes, what)?;
        let mut m = DMatrix::zeros(rows, cols);
        for (k, chunk) in raw.chunks_exact(8).enumerate() {
            m[(k / cols, k % cols)] = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(m)
    }
}

impl Checkpoint {
    pub fn new(kem: Kem, classifier: Classifier) -> Result<Self> {
        if kem.dim() != classifier.dim() {
            return Err(ForoError::DimensionMismatch {
                context: "checkpoint",
                expected: kem.dim(),
                found: classifier.dim(),
            });
        }
        Ok(Self { kem, classifier })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let m = self.kem.dim();
        let c = self.classifier.num_classes();
        let mut out = Vec::with_capacity(40 + 4 * c + 8 * m * (m + c));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(m as u32).to_le_bytes());
        out.extend_from_slice(&(c as u32).to_le_bytes());
        for id in self.classifier.class_ids() {
            out.extend_from_slice(&id.to_le_bytes());
        }
        out.extend_from_slice(&self.kem.gamma().to_le_bytes());
        out.extend_from_slice(&self.kem.samples_seen().to_le_bytes());
        put_matrix(&mut out, self.kem.r());
        put_matrix(&mut out, self.classifier.weights());
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(ForoError::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(ForoError::CorruptCheckpoint(format!(
                "unsupported version {version}"
            )));
        }
        let m = r.u32("M")? as usize;
        let c = r.u32("class count")? as usize;
        let class_ids = (0..c)
            .map(|_| r.u32("class ids"))
            .collect::<Result<Vec<_>>>()?;
        let gamma = r.f64("gamma")?;
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ForoError::CorruptCheckpoint(format!(
                "invalid gamma {gamma}"
            )));
        }
        let samples_seen = r.u64("samples seen")?;
        let rm = r.matrix(m, m, "R")?;
        let w = r.matrix(m, c, "W")?;
        if r.pos != buf.len() {
            return Err(ForoError::CorruptCheckpoint(format!(
                "{} trailing bytes",
                buf.len() - r.pos
            )));
        }
        Ok(Self {
            kem: Kem::from_parts(rm, gamma, samples_seen),
            classifier: Classifier::from_parts(w, class_ids)
                .map_err(|e| ForoError::CorruptCheckpoint(e.to_string()))?,
        })
    }

    /// Writes to a temporary file next to `path` and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ForoError::MissingFile(path.to_path_buf()),
            _ => ForoError::Io(e),
        })?;
        Self::from_bytes(&bytes)
    }
}

/// Writes the checkpoint to any sink (no atomicity).
pub fn write_to<W: Write>(ckpt: &Checkpoint, mut sink: W) -> Result<()> {
    sink.write_all(&ckpt.to_bytes())?;
    Ok(())
}
