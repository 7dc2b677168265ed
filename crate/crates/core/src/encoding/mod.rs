//! Nonlinear random projection, the knowledge encoding matrix, and the
//! incrementally updated linear classifier.
//!
//! The recursion is exact: after absorbing batches `X₁ … X_t` in any order,
//! [`Kem::r`] equals `(X₁:ₜᵀX₁:ₜ + γI)⁻¹` and the classifier weights equal the
//! batch ridge solution [`batch_solve_oracle`] on the union of the batches.

mod checkpoint;
mod classifier;
mod kem;
mod projection;

pub use checkpoint::{
    write_to, Checkpoint, MAGIC as CHECKPOINT_MAGIC, VERSION as CHECKPOINT_VERSION,
};
pub use classifier::{batch_solve_oracle, one_hot, Classifier, TaskBatch};
pub use kem::{Kem, WOODBURY_CHUNK};
pub use projection::{Activation, RandomProjection};
