//! Configuration, experiment execution and the `foro` command surface.

mod config;
mod inspect;
mod run;
mod verify;

pub use config::{ExperimentConfig, StreamSource};
pub use inspect::{condition_estimate, inspect, InspectReport};
pub use run::{
    load_stream, peak_rss_kb, run_experiment, RunArtifacts, Seeds, Summary, ACCURACY_FILE,
    CHECKPOINT_FILE, CURVES_FILE, SUMMARY_FILE,
};
pub use verify::{
    batch_prefix_oracle, max_prefix_error, random_stream, recursive_prefixes, reorder_columns,
    rosenbrock, sphere, verify, Check, RandomStream, VerifyReport, EQUIVALENCE_TOL,
};

use crate::error::ForoError;

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for failures during execution.
pub const EXIT_RUNTIME: i32 = 1;

/// Name of the subsystem an error originates from, for diagnostics.
pub fn module_of(err: &ForoError) -> &'static str {
    use ForoError::*;
    match err {
        InvalidDimension(_) | CovarianceNotPd | NonFiniteFitness { .. } | EmptyHistory => "cma",
        InvalidConfig(_) => "config",
        UninitializedHistory => "fitness",
        NonpositiveGamma(_)
        | FactorizationFailure(_)
        | DuplicateClass(_)
        | CorruptCheckpoint(_) => "encoding",
        InvalidSpec(_)
        | MissingFile(_)
        | ChecksumMismatch { .. }
        | OverlappingClasses { .. }
        | MalformedFeatureFile { .. }
        | EmptyTestSet(_)
        | IncompleteMatrix(_)
        | ReplayViolation(_) => "protocol",
        DimensionMismatch { .. } | EmptyBatch => "engine",
        Io(_) => "io",
        Json(_) => "config",
    }
}
