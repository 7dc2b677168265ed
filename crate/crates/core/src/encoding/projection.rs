use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ForoError, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }
}

/// Frozen random feature map `h = φ(x · W_rp)`.
///
/// `W_rp` is `d × M` with i.i.d. standard normal entries drawn row-major from
/// the seed. There is no fan-in scaling; the ridge regularizer absorbs scale.
#[derive(Debug, Clone)]
pub struct RandomProjection {
    weights: DMatrix<f64>,
    activation: Activation,
}

impl RandomProjection {
    pub fn build(
        input_dim: usize,
        output_dim: usize,
        activation: Activation,
        seed: u64,
    ) -> Result<Self> {
        if input_dim < 1 || output_dim < 1 {
            return Err(ForoError::InvalidDimension(format!(
                "projection dims must be positive, got {input_dim}×{output_dim}"
            )));
        }
        let mut rng = rng_from(seed);
        let mut weights = DMatrix::zeros(input_dim, output_dim);
        for i in 0..input_dim {
            for j in 0..output_dim {
                weights[(i, j)] = rng.sample(StandardNormal);
            }
        }
        Ok(Self {
            weights,
            activation,
        })
    }

    /// Wraps an explicit matrix; used for fixed-weight experiments.
    pub fn from_matrix(weights: DMatrix<f64>, activation: Activation) -> Self {
        Self {
            weights,
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn project(&self, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if features.ncols() != self.input_dim() {
            return Err(ForoError::DimensionMismatch {
                context: "projection input",
                expected: self.input_dim(),
                found: features.ncols(),
            });
        }
        let mut h = features * &self.weights;
        let act = self.activation;
        h.apply(|v| *v = act.apply(*v));
        Ok(h)
    }
}
