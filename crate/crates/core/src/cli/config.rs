//! Experiment configuration files.
//!
//! JSON, every section optional, unknown keys rejected:
//!
//! ```json
//! {
//!   "mode": "foro",                       // foro | kem-only | fitness-only
//!   "seed": 1,
//!   "prompts": 3,
//!   "backbone": {"layers": 4, "embed_dim": 16, "patches": 8, "heads": 2, "mlp_ratio": 2.0},
//!   "cma": {"population": 6, "generations": 20, "covariance": "full"},
//!   "fitness": {"lambda": 0.3, "alpha": 0.1, "eval_batch": 32},
//!   "encoding": {"nrp_dim": 8192, "gamma": 0.1, "activation": "relu"},
//!   "stream": {"synthetic": {"tasks": 5, "classes_per_task": 4, "input": "patches"}},
//!   "output_dir": "out"
//! }
//! ```
//!
//! `stream` may instead be `{"manifest": "path/to/manifest.json"}`, resolved
//! relative to the config file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::error::{ForoError, Result};
use crate::fitness::FitnessConfig;
use crate::protocol::{CmaConfig, EncodingConfig, EngineConfig, InputKind, Mode, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum StreamSource {
    Synthetic(SyntheticSpec),
    Manifest(PathBuf),
}

impl Default for StreamSource {
    fn default() -> Self {
        StreamSource::Synthetic(SyntheticSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub seed: u64,
    pub prompts: usize,
    pub backbone: BackboneConfig,
    pub cma: CmaConfig,
    pub fitness: FitnessConfig,
    pub encoding: EncodingConfig,
    pub stream: StreamSource,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let e = EngineConfig::default();
        Self {
            mode: e.mode,
            seed: e.seed,
            prompts: e.prompts,
            backbone: e.backbone,
            cma: e.cma,
            fitness: e.fitness,
            encoding: e.encoding,
            stream: StreamSource::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file and resolves relative manifest paths against it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ForoError::MissingFile(path.to_path_buf()),
            _ => ForoError::Io(e),
        })?;
        let mut cfg: Self = serde_json::from_str(&text)?;
        if let StreamSource::Manifest(m) = &mut cfg.stream {
            if m.is_relative() {
                if let Some(dir) = path.parent() {
                    *m = dir.join(&*m);
                }
            }
        }
        Ok(cfg)
    }

    pub fn engine_config(&self, threads: Option<usize>) -> EngineConfig {
        EngineConfig {
            mode: self.mode,
            prompts: self.prompts,
            backbone: self.backbone.clone(),
            cma: self.cma.clone(),
            fitness: self.fitness.clone(),
            encoding: self.encoding.clone(),
            seed: self.seed,
            threads,
        }
    }

    /// Range and consistency checks that can run before any data is touched.
    pub fn validate(&self) -> Result<()> {
        self.engine_config(None).validate()?;
        match &self.stream {
            StreamSource::Manifest(p) => {
                if !p.exists() {
                    return Err(ForoError::MissingFile(p.clone()));
                }
                if self.mode != Mode::KemOnly {
                    return Err(ForoError::InvalidConfig(
                        "manifest streams hold fixed features and require mode kem-only".into(),
                    ));
                }
            }
            StreamSource::Synthetic(spec) => {
                spec.validate()?;
                match spec.input {
                    InputKind::Patches => {
                        if spec.dim != self.backbone.embed_dim
                            || spec.patches != self.backbone.patches
                        {
                            return Err(ForoError::InvalidConfig(format!(
                                "synthetic patches are {}×{} but the backbone expects {}×{}",
                                spec.patches,
                                spec.dim,
                                self.backbone.patches,
                                self.backbone.embed_dim
                            )));
                        }
                    }
                    InputKind::Features | InputKind::Xor => {
                        if self.mode != Mode::KemOnly {
                            return Err(ForoError::InvalidConfig(
                                "feature-vector streams require mode kem-only".into(),
                            ));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}
