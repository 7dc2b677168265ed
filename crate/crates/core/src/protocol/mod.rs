//! Class-incremental task streams, the learning driver and evaluation metrics.

mod engine;
mod feature_file;
mod metrics;
mod stream;
mod synthetic;

pub use engine::{
    CmaConfig, CovarianceKind, EncodingConfig, Engine, EngineConfig, Mode, Outcome, TaskReport,
};
pub use feature_file::{
    load_feature_stream, load_feature_tasks, task_checksum, write_feature_stream, FeatureFile,
    FeatureTask, Manifest, ManifestEntry, MAGIC as FEATURE_MAGIC, VERSION as FEATURE_VERSION,
};
pub use metrics::{accuracy, average_accuracy, average_forgetting, AccuracyMatrix, Fraction};
pub use stream::{InputShape, Inputs, Split, StreamMode, Task, TaskStream};
pub use synthetic::{generate_synthetic, InputKind, SyntheticSpec};
