//! The task-by-task learning driver.
//!
//! For each task in [`Mode::Foro`]: sample prompt candidates from CMA-ES,
//! score each on a fresh minibatch, update the search distribution, and after
//! the last generation take the best prompt seen for this task. Its features
//! for the whole training split are projected, the classifier is widened for
//! the new classes, the knowledge encoding matrix absorbs the features and the
//! weights are corrected against it. The activation history is advanced last.
//!
//! Inference always uses the most recent task's best prompt.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, AccuracyMatrix, Fraction};
use super::stream::{InputShape, Inputs, Task, TaskStream};
use crate::backbone::{Backbone, BackboneConfig, LayerStats, PromptMatrix};
use crate::cma::{BestTracker, CmaState, CovarianceMode};
use crate::encoding::{Activation, Classifier, Kem, RandomProjection, TaskBatch};
use crate::error::{ForoError, Result};
use crate::fitness::{evaluate_candidate, FitnessConfig, FitnessContext, GlobalStats, SampleBatch};
use crate::seed::{derive, rng_from, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Prompt search plus knowledge encoding.
    #[default]
    Foro,
    /// Knowledge encoding with the initial (zero) prompt; no search.
    KemOnly,
    /// Prompt search; each task's classes get a ridge head fitted on that task alone.
    FitnessOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    #[default]
    Full,
    /// One block per prompt row.
    BlockDiagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CmaConfig {
    pub population: usize,
    pub generations: usize,
    pub covariance: CovarianceKind,
}

impl Default for CmaConfig {
    fn default() -> Self {
        Self {
            population: 6,
            generations: 20,
            covariance: CovarianceKind::Full,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingConfig {
    pub nrp_dim: usize,
    pub gamma: f64,
    pub activation: Activation,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            nrp_dim: 8192,
            gamma: 0.1,
            activation: Activation::Relu,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub mode: Mode,
    pub prompts: usize,
    pub backbone: BackboneConfig,
    pub cma: CmaConfig,
    pub fitness: FitnessConfig,
    pub encoding: EncodingConfig,
    pub seed: u64,
    /// Cap on concurrent fitness evaluations; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Foro,
            prompts: 3,
            backbone: BackboneConfig::default(),
            cma: CmaConfig::default(),
            fitness: FitnessConfig::default(),
            encoding: EncodingConfig::default(),
            seed: 0,
            threads: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ForoError::InvalidConfig(m));
        if !(self.encoding.gamma > 0.0 && self.encoding.gamma.is_finite()) {
            return Err(ForoError::NonpositiveGamma(self.encoding.gamma));
        }
        if self.encoding.nrp_dim == 0 {
            return bad("encoding.nrp_dim must be positive".into());
        }
        if !(self.fitness.lambda >= 0.0 && self.fitness.lambda.is_finite()) {
            return bad(format!(
                "fitness.lambda must be non-negative, got {}",
                self.fitness.lambda
            ));
        }
        if !(0.0..=1.0).contains(&self.fitness.alpha) {
            return bad(format!(
                "fitness.alpha must lie in [0, 1], got {}",
                self.fitness.alpha
            ));
        }
        if self.mode != Mode::KemOnly {
            if self.cma.population < 2 {
                return bad("cma.population must be at least 2".into());
            }
            if self.prompts == 0 {
                return bad("prompts must be at least 1 when prompt search is enabled".into());
            }
            if self.fitness.eval_batch == 0 {
                return bad("fitness.eval_batch must be positive".into());
            }
        }
        if self.threads == Some(0) {
            return bad("thread cap must be positive".into());
        }
        self.backbone.validate()
    }
}

/// Per-task learning record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskReport {
    pub task_id: u32,
    /// Best-so-far fitness after each generation.
    pub curve: Vec<f64>,
    pub best_fitness: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub matrix: AccuracyMatrix,
    pub reports: Vec<TaskReport>,
}

/// Cycles through a shuffled index order, reshuffling when exhausted.
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
}

impl EpochSampler {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn next(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let size = size.min(self.order.len());
        if self.pos + size > self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let out = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        out
    }
}

pub struct Engine {
    cfg: EngineConfig,
    backbone: Option<Backbone>,
    projection: RandomProjection,
    kem: Kem,
    classifier: Classifier,
    history: GlobalStats,
    cma: Option<CmaState>,
    cma_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
    prompt: PromptMatrix,
    pool: Option<rayon::ThreadPool>,
}

impl Engine {
    pub fn new(cfg: EngineConfig, shape: InputShape) -> Result<Self> {
        cfg.validate()?;
        let seed = cfg.seed;
        let (backbone, in_dim) = match shape {
            InputShape::Patches { patches, dim } => {
                let bcfg = BackboneConfig {
                    seed: derive(seed, Stream::Backbone),
                    ..cfg.backbone.clone()
                };
                if patches != bcfg.patches || dim != bcfg.embed_dim {
                    return Err(ForoError::InvalidConfig(format!(
                        "stream patches are {patches}×{dim} but the backbone expects {}×{}",
                        bcfg.patches, bcfg.embed_dim
                    )));
                }
                (Some(Backbone::build(bcfg)?), dim)
            }
            InputShape::Features { dim } => {
                if cfg.mode != Mode::KemOnly {
                    return Err(ForoError::InvalidConfig(
                        "feature-vector streams cannot respond to prompts; use mode kem-only"
                            .into(),
                    ));
                }
                (None, dim)
            }
        };
        let projection = RandomProjection::build(
            in_dim,
            cfg.encoding.nrp_dim,
            cfg.encoding.activation,
            derive(seed, Stream::Projection),
        )?;
        let m = cfg.encoding.nrp_dim;
        let cma = match (&backbone, cfg.mode) {
            (Some(bb), Mode::Foro | Mode::FitnessOnly) => {
                let d = bb.embed_dim();
                let mode = match cfg.cma.covariance {
                    CovarianceKind::Full => CovarianceMode::Full,
                    CovarianceKind::BlockDiagonal => CovarianceMode::BlockDiagonal { block: d },
                };
                Some(CmaState::with_covariance(
                    cfg.prompts * d,
                    cfg.cma.population,
                    derive(seed, Stream::Cma),
                    mode,
                )?)
            }
            _ => None,
        };
        let prompt = match &backbone {
            Some(bb) => PromptMatrix::zeros(cfg.prompts, bb.embed_dim()),
            None => PromptMatrix::empty(in_dim),
        };
        let pool = match cfg.threads {
            Some(n) => Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| ForoError::InvalidConfig(format!("thread pool: {e}")))?,
            ),
            None => None,
        };
        Ok(Self {
            kem: Kem::new(m, cfg.encoding.gamma)?,
            classifier: Classifier::new(m),
            history: GlobalStats::new(cfg.fitness.alpha)?,
            cma_rng: rng_from(derive(seed, Stream::Cma)),
            batch_rng: rng_from(derive(seed, Stream::Minibatch)),
            backbone,
            projection,
            cma,
            prompt,
            pool,
            cfg,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn backbone(&self) -> Option<&Backbone> {
        self.backbone.as_ref()
    }

    pub fn projection(&self) -> &RandomProjection {
        &self.projection
    }

    pub fn kem(&self) -> &Kem {
        &self.kem
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn history(&self) -> &GlobalStats {
        &self.history
    }

    pub fn cma(&self) -> Option<&CmaState> {
        self.cma.as_ref()
    }

    /// Prompt used for feature extraction and inference.
    pub fn prompt(&self) -> &PromptMatrix {
        &self.prompt
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> R {
        match &self.pool {
            Some(pool) => pool.install(f),
            None => f(),
        }
    }

    /// Raw features of `inputs` under `prompt`, plus CLS statistics for patch inputs.
    fn raw_features(
        &self,
        inputs: &Inputs,
        prompt: &PromptMatrix,
    ) -> Result<(DMatrix<f64>, Option<LayerStats>)> {
        match (inputs, &self.backbone) {
            (Inputs::Features(f), _) => Ok((f.clone(), None)),
            (Inputs::Patches(p), Some(bb)) => {
                let (x, stats) = self.install(|| bb.batch_forward(prompt, p))?;
                Ok((x, Some(stats)))
            }
            (Inputs::Patches(_), None) => Err(ForoError::InvalidConfig(
                "patch inputs need a backbone".into(),
            )),
        }
    }

    /// Projected features of `inputs` under the current prompt.
    pub fn project_inputs(&self, inputs: &Inputs) -> Result<DMatrix<f64>> {
        let (raw, _) = self.raw_features(inputs, &self.prompt)?;
        self.projection.project(&raw)
    }

    fn search_prompt(&mut self, task: &Task) -> Result<(PromptMatrix, Vec<f64>, Option<f64>)> {
        let (Some(bb), Some(mut cma)) = (self.backbone.as_ref(), self.cma.take()) else {
            return Ok((self.prompt.clone(), Vec::new(), None));
        };
        let d = bb.embed_dim();
        let train = task.train();
        let Inputs::Patches(inputs) = &train.inputs else {
            self.cma = Some(cma);
            return Err(ForoError::InvalidConfig(
                "prompt search needs patch inputs".into(),
            ));
        };
        if inputs.is_empty() {
            self.cma = Some(cma);
            return Err(ForoError::EmptyBatch);
        }
        let ctx = FitnessContext {
            backbone: bb,
            projection: &self.projection,
            history: &self.history,
            prompt_rows: self.cfg.prompts,
            lambda: self.cfg.fitness.lambda,
            gamma: self.cfg.encoding.gamma,
        };
        let mut sampler = EpochSampler::new(inputs.len(), &mut self.batch_rng);
        let mut tracker = BestTracker::default();
        let mut curve = Vec::with_capacity(self.cfg.cma.generations);
        let initial = PromptMatrix::from_genome(cma.mean().as_slice(), self.cfg.prompts, d)?;

        let result: Result<()> = (|| {
            for _ in 0..self.cfg.cma.generations {
                let idx = sampler.next(self.cfg.fitness.eval_batch, &mut self.batch_rng);
                let batch_inputs: Vec<DMatrix<f64>> =
                    idx.iter().map(|&i| inputs[i].clone()).collect();
                let batch_labels: Vec<u32> = idx.iter().map(|&i| train.labels[i]).collect();
                let batch = SampleBatch {
                    inputs: &batch_inputs,
                    labels: &batch_labels,
                    class_ids: &task.class_ids,
                };
                let mut population = cma.ask(&mut self.cma_rng)?;
                let scores: Vec<Result<f64>> = {
                    let run = || {
                        population
                            .par_iter()
                            .map(|c| evaluate_candidate(&c.genome, batch, ctx).map(|f| f.total))
                            .collect()
                    };
                    match &self.pool {
                        Some(pool) => pool.install(run),
                        None => run(),
                    }
                };
                for (c, s) in population.iter_mut().zip(scores) {
                    c.fitness = s?;
                }
                cma.tell(&population)?;
                tracker.observe(&population);
                curve.push(tracker.best_fitness());
            }
            Ok(())
        })();
        self.cma = Some(cma);
        result?;

        match tracker.best() {
            Some(best) => Ok((
                PromptMatrix::from_genome(&best.genome, self.cfg.prompts, d)?,
                curve,
                Some(best.fitness),
            )),
            None => Ok((initial, curve, None)),
        }
    }

    /// Learns one task. Its training split is read only inside this call.
    pub fn learn_task(&mut self, task: &Task) -> Result<TaskReport> {
        let start = Instant::now();
        let (prompt, curve, best_fitness) = match self.cfg.mode {
            Mode::KemOnly => (self.prompt.clone(), Vec::new(), None),
            Mode::Foro | Mode::FitnessOnly => self.search_prompt(task)?,
        };

        let train = task.train();
        if train.is_empty() {
            return Err(ForoError::EmptyBatch);
        }
        let (raw, stats) = self.raw_features(&train.inputs, &prompt)?;
        let h = self.projection.project(&raw)?;
        self.classifier.extend(&task.class_ids)?;

        match self.cfg.mode {
            Mode::Foro | Mode::KemOnly => {
                let batch = TaskBatch::new(h, train.labels.clone(), self.classifier.class_ids())?;
                self.kem.update(&batch.x)?;
                self.classifier.update(&self.kem, &batch)?;
            }
            Mode::FitnessOnly => {
                self.classifier.fit_columns(
                    &task.class_ids,
                    &h,
                    &train.labels,
                    self.cfg.encoding.gamma,
                )?;
            }
        }
        if self.cfg.mode != Mode::KemOnly {
            if let Some(stats) = stats {
                self.history.update(&stats)?;
            }
        }
        self.prompt = prompt;

        Ok(TaskReport {
            task_id: task.task_id,
            curve,
            best_fitness,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Test accuracy of one task under the current classifier and prompt.
    pub fn evaluate_task(&self, task: &Task, position: usize) -> Result<Fraction> {
        if task.test.is_empty() {
            return Err(ForoError::EmptyTestSet(position));
        }
        let h = self.project_inputs(&task.test.inputs)?;
        let (_, preds) = self.classifier.predict(&h)?;
        let correct = preds
            .iter()
            .zip(&task.test.labels)
            .filter(|(p, y)| p == y)
            .count();
        accuracy(correct as u64, task.test.len() as u64)
    }

    /// Row `learned` of the accuracy matrix: accuracy on tasks `1..=learned`.
    pub fn evaluate_all(&self, stream: &TaskStream, learned: usize) -> Result<Vec<Fraction>> {
        if learned > stream.len() {
            return Err(ForoError::IncompleteMatrix(format!(
                "asked for {learned} tasks, stream has {}",
                stream.len()
            )));
        }
        (0..learned)
            .map(|t| self.evaluate_task(&stream.tasks[t], t + 1))
            .collect()
    }

    /// Learns every task in order, evaluating after each one.
    pub fn run(&mut self, stream: &TaskStream) -> Result<Outcome> {
        stream.validate()?;
        let mut matrix = AccuracyMatrix::new();
        let mut reports = Vec::with_capacity(stream.len());
        let mut reads_at_completion = Vec::with_capacity(stream.len());
        for (t, task) in stream.tasks.iter().enumerate() {
            reports.push(self.learn_task(task)?);
            reads_at_completion.push(task.train_reads());
            matrix.push_row(self.evaluate_all(stream, t + 1)?)?;
            for (s, done) in stream.tasks[..=t].iter().enumerate() {
                if done.train_reads() != reads_at_completion[s] {
                    return Err(ForoError::ReplayViolation(s));
                }
            }
        }
        Ok(Outcome { matrix, reports })
    }
}
