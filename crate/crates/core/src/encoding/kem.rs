use nalgebra::DMatrix;

use crate::error::{ForoError, Result};
use crate::linalg::{spd_solve, symmetrize};

/// Rows absorbed per Woodbury step; bounds the inner system to this size.
pub const WOODBURY_CHUNK: usize = 256;

/// Knowledge encoding matrix `R = (XᵀX + γI)⁻¹` over every row seen so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Kem {
    r: DMatrix<f64>,
    gamma: f64,
    samples_seen: u64,
}

impl Kem {
    /// `R₀ = (γI)⁻¹`.
    pub fn new(dim: usize, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(ForoError::NonpositiveGamma(gamma));
        }
        Ok(Self {
            r: DMatrix::identity(dim, dim) / gamma,
            gamma,
            samples_seen: 0,
        })
    }

    pub(crate) fn from_parts(r: DMatrix<f64>, gamma: f64, samples_seen: u64) -> Self {
        Self {
            r,
            gamma,
            samples_seen,
        }
    }

    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    /// Absorbs a batch of rows with the Woodbury identity:
    /// `R ← R − R Xᵀ (I + X R Xᵀ)⁻¹ X R`.
    pub fn update(&mut self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(ForoError::DimensionMismatch {
                context: "kem update",
                expected: self.dim(),
                found: x.ncols(),
            });
        }
        let n = x.nrows();
        let mut start = 0;
        while start < n {
            let rows = WOODBURY_CHUNK.min(n - start);
            let chunk = x.rows(start, rows);
            let rxt = &self.r * chunk.transpose();
            let mut inner = chunk * &rxt;
            for i in 0..rows {
                inner[(i, i)] += 1.0;
            }
            symmetrize(&mut inner);
            let gain = spd_solve(inner, &rxt.transpose(), "woodbury inner system")?;
            self.r -= &rxt * gain;
            symmetrize(&mut self.r);
            start += rows;
        }
        self.samples_seen += n as u64;
        Ok(())
    }
}
