use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, StreamSource};
use crate::encoding::Checkpoint;
use crate::error::Result;
use crate::io::write_atomic;
use crate::protocol::{
    average_accuracy, average_forgetting, generate_synthetic, load_feature_stream, AccuracyMatrix,
    Engine, TaskReport, TaskStream,
};
use crate::seed::{derive, Stream};

pub const ACCURACY_FILE: &str = "accuracy_matrix.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";

#[derive(Debug, Clone, Serialize)]
pub struct Seeds {
    pub master: u64,
    pub backbone: u64,
    pub projection: u64,
    pub cma: u64,
    pub minibatch: u64,
    pub data: u64,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Self {
            master,
            backbone: derive(master, Stream::Backbone),
            projection: derive(master, Stream::Projection),
            cma: derive(master, Stream::Cma),
            minibatch: derive(master, Stream::Minibatch),
            data: derive(master, Stream::Data),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub tasks: usize,
    pub average_accuracy: f64,
    pub average_forgetting: f64,
    pub task_seconds: Vec<f64>,
    pub peak_rss_kb: Option<u64>,
    pub backbone_checksum: Option<String>,
    pub seeds: Seeds,
    pub config: ExperimentConfig,
}

pub struct RunArtifacts {
    pub matrix: AccuracyMatrix,
    pub reports: Vec<TaskReport>,
    pub summary: Summary,
    pub checkpoint: Checkpoint,
}

impl RunArtifacts {
    pub fn curves_csv(&self) -> String {
        let mut out = String::from("task,generation,best_fitness\n");
        for r in &self.reports {
            for (g, f) in r.curve.iter().enumerate() {
                out.push_str(&format!("{},{},{}\n", r.task_id, g + 1, f));
            }
        }
        out
    }

    /// Writes every artifact into `dir`, each one atomically.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let acc = dir.join(ACCURACY_FILE);
        let curves = dir.join(CURVES_FILE);
        let ckpt = dir.join(CHECKPOINT_FILE);
        let summary = dir.join(SUMMARY_FILE);
        write_atomic(&acc, self.matrix.to_csv().as_bytes())?;
        write_atomic(&curves, self.curves_csv().as_bytes())?;
        self.checkpoint.save(&ckpt)?;
        let mut json = serde_json::to_vec_pretty(&self.summary)?;
        json.push(b'\n');
        write_atomic(&summary, &json)?;
        Ok(vec![acc, summary, curves, ckpt])
    }
}

/// Peak resident set size from `/proc/self/status`, when available.
pub fn peak_rss_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find(|l| l.starts_with("VmHWM:"))?
        .split_whitespace()
        .nth(1)?
        .parse()
        .ok()
}

pub fn load_stream(cfg: &ExperimentConfig) -> Result<TaskStream> {
    match &cfg.stream {
        StreamSource::Synthetic(spec) => generate_synthetic(spec, derive(cfg.seed, Stream::Data)),
        StreamSource::Manifest(path) => load_feature_stream(path),
    }
}

/// Runs one experiment end to end without touching the filesystem beyond
/// reading a manifest stream.
pub fn run_experiment(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<RunArtifacts> {
    cfg.validate()?;
    let stream = load_stream(cfg)?;
    let mut engine = Engine::new(cfg.engine_config(threads), stream.input_shape()?)?;
    let outcome = engine.run(&stream)?;
    let t = stream.len();
    let summary = Summary {
        tasks: t,
        average_accuracy: average_accuracy(&outcome.matrix, t)?,
        average_forgetting: average_forgetting(&outcome.matrix, t)?,
        task_seconds: outcome.reports.iter().map(|r| r.seconds).collect(),
        peak_rss_kb: peak_rss_kb(),
        backbone_checksum: engine.backbone().map(|b| b.checksum()),
        seeds: Seeds::from_master(cfg.seed),
        config: cfg.clone(),
    };
    Ok(RunArtifacts {
        checkpoint: Checkpoint::new(engine.kem().clone(), engine.classifier().clone())?,
        matrix: outcome.matrix,
        reports: outcome.reports,
        summary,
    })
}
