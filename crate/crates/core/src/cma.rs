//! Covariance Matrix Adaptation Evolution Strategy.
//!
//! A (μ/μ_w, λ)-CMA-ES minimizing a black-box objective over flat `f64`
//! vectors. Candidates are drawn as `m + τ·B·D·z` with `z ~ N(0, I)` where
//! `B·D²·Bᵀ` is the eigendecomposition of the covariance. Ranking uses only the
//! order of fitness values, with ties resolved by sampling index, so the update
//! is invariant to any strictly increasing transform of the objective.
//!
//! The covariance is stored as a list of diagonal blocks. The default is a
//! single block spanning the whole vector; [`CovarianceMode::BlockDiagonal`]
//! keeps one independent block per prompt row.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ForoError, Result};

/// Lower bound applied to the step size after every update.
pub const MIN_STEP_SIZE: f64 = 1e-12;
/// Eigenvalues are clamped to this fraction of the largest one before sampling.
pub const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceMode {
    #[default]
    Full,
    /// Independent square blocks of the given width along the diagonal.
    BlockDiagonal { block: usize },
}

/// Default strategy constants derived from the dimension and population size.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyParams {
    pub weights: Vec<f64>,
    pub mu: usize,
    pub mu_eff: f64,
    pub c_sigma: f64,
    pub d_sigma: f64,
    pub c_c: f64,
    pub c_1: f64,
    pub c_mu: f64,
    /// Expected norm of an n-dimensional standard normal vector.
    pub chi_n: f64,
}

impl StrategyParams {
    pub fn new(n: usize, population: usize) -> Self {
        let nf = n as f64;
        let mu = population / 2;
        let raw: Vec<f64> = (1..=mu)
            .map(|i| (mu as f64 + 0.5).ln() - (i as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();

        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        Self {
            weights,
            mu,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
        }
    }
}

/// One sampled point of the search distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub genome: Vec<f64>,
    /// Loss value; `NaN` until evaluated. Lower is better.
    pub fitness: f64,
    /// Position in sampling order within its generation.
    pub index: usize,
}

/// Eigen factor of one covariance block: `C = B · diag(d²) · Bᵀ`.
struct BlockFactor {
    basis: DMatrix<f64>,
    /// Square roots of the clamped eigenvalues.
    scales: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct CmaState {
    mean: DVector<f64>,
    step_size: f64,
    blocks: Vec<DMatrix<f64>>,
    path_sigma: DVector<f64>,
    path_cov: DVector<f64>,
    generation: u64,
    population: usize,
    params: StrategyParams,
    seed: u64,
}

impl CmaState {
    /// Zero mean, identity covariance, unit step size.
    pub fn new(n: usize, population: usize, seed: u64) -> Result<Self> {
        Self::with_covariance(n, population, seed, CovarianceMode::Full)
    }

    pub fn with_covariance(
        n: usize,
        population: usize,
        seed: u64,
        mode: CovarianceMode,
    ) -> Result<Self> {
        if n < 1 {
            return Err(ForoError::InvalidDimension(
                "search dimension must be at least 1".into(),
            ));
        }
        if population < 2 {
            return Err(ForoError::InvalidDimension(format!(
                "population size must be at least 2, got {population}"
            )));
        }
        let block = match mode {
            CovarianceMode::Full => n,
            CovarianceMode::BlockDiagonal { block } => {
                if block == 0 || !n.is_multiple_of(block) {
                    return Err(ForoError::InvalidDimension(format!(
                        "block width {block} does not divide dimension {n}"
                    )));
                }
                block
            }
        };
        Ok(Self {
            mean: DVector::zeros(n),
            step_size: 1.0,
            blocks: (0..n / block)
                .map(|_| DMatrix::identity(block, block))
                .collect(),
            path_sigma: DVector::zeros(n),
            path_cov: DVector::zeros(n),
            generation: 0,
            population,
            params: StrategyParams::new(n, population),
            seed,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn params(&self) -> &StrategyParams {
        &self.params
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn path_sigma(&self) -> &DVector<f64> {
        &self.path_sigma
    }

    pub fn path_cov(&self) -> &DVector<f64> {
        &self.path_cov
    }

    /// Overrides the mean, e.g. to start a search away from the origin.
    pub fn set_mean(&mut self, mean: DVector<f64>) -> Result<()> {
        if mean.len() != self.dim() {
            return Err(ForoError::DimensionMismatch {
                context: "cma mean",
                expected: self.dim(),
                found: mean.len(),
            });
        }
        self.mean = mean;
        Ok(())
    }

    /// Overrides the step size. Zero is accepted and collapses sampling onto the mean.
    pub fn set_step_size(&mut self, step_size: f64) {
        self.step_size = step_size.max(0.0);
    }

    fn block_width(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// The full covariance matrix assembled from its blocks.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let w = self.block_width();
        let mut full = DMatrix::zeros(n, n);
        for (b, block) in self.blocks.iter().enumerate() {
            full.view_mut((b * w, b * w), (w, w)).copy_from(block);
        }
        full
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(|b| SymmetricEigen::new(b.clone()).eigenvalues.min())
            .fold(f64::INFINITY, f64::min)
    }

    fn factorize(&self) -> Result<Vec<BlockFactor>> {
        let eigens: Vec<SymmetricEigen<f64, nalgebra::Dyn>> = self
            .blocks
            .iter()
            .map(|b| SymmetricEigen::new(b.clone()))
            .collect();
        let largest = eigens
            .iter()
            .map(|e| e.eigenvalues.max())
            .fold(f64::NEG_INFINITY, f64::max);
        if !largest.is_finite() || largest <= 0.0 {
            return Err(ForoError::CovarianceNotPd);
        }
        let floor = largest * EIGEN_FLOOR;
        eigens
            .into_iter()
            .map(|e| {
                if e.eigenvalues.iter().any(|v| !v.is_finite()) {
                    return Err(ForoError::CovarianceNotPd);
                }
                Ok(BlockFactor {
                    scales: e.eigenvalues.map(|v| v.max(floor).sqrt()),
                    basis: e.eigenvectors,
                })
            })
            .collect()
    }

    /// Draws one generation of candidates. Does not modify the state; the
    /// only source of randomness is `rng`, consumed `n` normals per candidate.
    pub fn ask<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<Candidate>> {
        let factors = self.factorize()?;
        let n = self.dim();
        let w = self.block_width();
        let mut out = Vec::with_capacity(self.population);
        for index in 0..self.population {
            let z = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
            let mut genome = self.mean.clone();
            for (b, f) in factors.iter().enumerate() {
                let zb = z.rows(b * w, w).component_mul(&f.scales);
                let yb = &f.basis * zb;
                for i in 0..w {
                    genome[b * w + i] += self.step_size * yb[i];
                }
            }
            out.push(Candidate {
                genome: genome.iter().copied().collect(),
                fitness: f64::NAN,
                index,
            });
        }
        Ok(out)
    }

    /// Applies `C^{-1/2}` blockwise.
    fn inv_sqrt_apply(&self, factors: &[BlockFactor], v: &DVector<f64>) -> DVector<f64> {
        let w = self.block_width();
        let mut out = DVector::zeros(v.len());
        for (b, f) in factors.iter().enumerate() {
            let vb = v.rows(b * w, w);
            let mut coeffs = f.basis.transpose() * vb;
            coeffs.component_div_assign(&f.scales);
            out.rows_mut(b * w, w).copy_from(&(&f.basis * coeffs));
        }
        out
    }

    /// Updates mean, evolution paths, covariance and step size from one
    /// evaluated generation.
    pub fn tell(&mut self, evaluated: &[Candidate]) -> Result<()> {
        if evaluated.len() != self.population {
            return Err(ForoError::DimensionMismatch {
                context: "cma population",
                expected: self.population,
                found: evaluated.len(),
            });
        }
        for c in evaluated {
            if c.genome.len() != self.dim() {
                return Err(ForoError::DimensionMismatch {
                    context: "candidate genome",
                    expected: self.dim(),
                    found: c.genome.len(),
                });
            }
            if !c.fitness.is_finite() {
                return Err(ForoError::NonFiniteFitness {
                    index: c.index,
                    value: c.fitness,
                });
            }
        }
        let factors = self.factorize()?;

        let mut order: Vec<&Candidate> = evaluated.iter().collect();
        order.sort_by(|a, b| a.fitness.total_cmp(&b.fitness).then(a.index.cmp(&b.index)));
        let elite = &order[..self.params.mu];

        let n = self.dim();
        let sigma = self.step_size.max(MIN_STEP_SIZE);
        let steps: Vec<DVector<f64>> = elite
            .iter()
            .map(|c| (DVector::from_column_slice(&c.genome) - &self.mean) / sigma)
            .collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in self.params.weights.iter().zip(&steps) {
            y_w.axpy(*w, y, 1.0);
        }
        self.mean.axpy(sigma, &y_w, 1.0);

        let p = &self.params;
        let gen_after = self.generation + 1;
        let cs_norm = (p.c_sigma * (2.0 - p.c_sigma) * p.mu_eff).sqrt();
        let whitened = self.inv_sqrt_apply(&factors, &y_w);
        self.path_sigma = &self.path_sigma * (1.0 - p.c_sigma) + whitened * cs_norm;

        let ps_norm = self.path_sigma.norm();
        let bias = (1.0 - (1.0 - p.c_sigma).powf(2.0 * gen_after as f64)).sqrt();
        let h_sigma = if ps_norm / bias < (1.4 + 2.0 / (n as f64 + 1.0)) * p.chi_n {
            1.0
        } else {
            0.0
        };
        let cc_norm = (p.c_c * (2.0 - p.c_c) * p.mu_eff).sqrt();
        self.path_cov = &self.path_cov * (1.0 - p.c_c) + &y_w * (h_sigma * cc_norm);

        let delta = (1.0 - h_sigma) * p.c_c * (2.0 - p.c_c);
        let weight_sum: f64 = p.weights.iter().sum();
        let decay = 1.0 + p.c_1 * delta - p.c_1 - p.c_mu * weight_sum;
        let w = self.blocks[0].nrows();
        for (b, block) in self.blocks.iter_mut().enumerate() {
            let pc = self.path_cov.rows(b * w, w);
            *block *= decay;
            block.ger(p.c_1, &pc, &pc, 1.0);
            for (wi, y) in p.weights.iter().zip(&steps) {
                let yb = y.rows(b * w, w);
                block.ger(p.c_mu * wi, &yb, &yb, 1.0);
            }
            crate::linalg::symmetrize(block);
        }

        self.step_size = (sigma * ((p.c_sigma / p.d_sigma) * (ps_norm / p.chi_n - 1.0)).exp())
            .max(MIN_STEP_SIZE);
        self.generation = gen_after;
        Ok(())
    }
}

/// Returns the lowest-fitness candidate over a history of generations.
///
/// Ties go to the earliest generation, then to the lowest sampling index.
pub fn best_of(history: &[Vec<Candidate>]) -> Result<Candidate> {
    let mut tracker = BestTracker::default();
    for generation in history {
        tracker.observe(generation);
    }
    tracker.best().cloned().ok_or(ForoError::EmptyHistory)
}

/// Streaming version of [`best_of`].
#[derive(Debug, Clone, Default)]
pub struct BestTracker {
    best: Option<Candidate>,
}

impl BestTracker {
    pub fn observe(&mut self, generation: &[Candidate]) {
        let mut sorted: Vec<&Candidate> = generation.iter().collect();
        sorted.sort_by_key(|c| c.index);
        for c in sorted {
            let better = match &self.best {
                None => true,
                Some(b) => c.fitness < b.fitness,
            };
            if better {
                self.best = Some(c.clone());
            }
        }
    }

    pub fn best(&self) -> Option<&Candidate> {
        self.best.as_ref()
    }

    pub fn best_fitness(&self) -> f64 {
        self.best.as_ref().map_or(f64::INFINITY, |c| c.fitness)
    }
}

/// Runs ask/evaluate/tell for a fixed number of generations and returns the
/// best candidate together with the best-so-far fitness after each generation.
pub fn minimize<F, R>(
    state: &mut CmaState,
    rng: &mut R,
    generations: usize,
    mut objective: F,
) -> Result<(Candidate, Vec<f64>)>
where
    F: FnMut(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    let mut tracker = BestTracker::default();
    let mut curve = Vec::with_capacity(generations);
    for _ in 0..generations {
        let mut pop = state.ask(rng)?;
        for c in &mut pop {
            c.fitness = objective(&c.genome);
        }
        state.tell(&pop)?;
        tracker.observe(&pop);
        curve.push(tracker.best_fitness());
    }
    let best = tracker.best().cloned().ok_or(ForoError::EmptyHistory)?;
    Ok((best, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    #[test]
    fn init_is_standard_normal_search() {
        let s = CmaState::new(4, 6, 7).unwrap();
        assert_eq!(s.mean().as_slice(), &[0.0; 4]);
        assert_eq!(s.covariance(), DMatrix::identity(4, 4));
        assert_eq!(s.step_size(), 1.0);
        assert_eq!(s.generation(), 0);
        let w: f64 = s.params().weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-15);
        assert_eq!(s.params().mu, 3);
    }

    #[test]
    fn smallest_legal_instance() {
        let s = CmaState::new(1, 2, 0).unwrap();
        assert_eq!(s.covariance(), DMatrix::from_element(1, 1, 1.0));
        assert_eq!(s.params().mu, 1);
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            CmaState::new(4, 1, 0),
            Err(ForoError::InvalidDimension(_))
        ));
        assert!(matches!(
            CmaState::new(0, 4, 0),
            Err(ForoError::InvalidDimension(_))
        ));
        assert!(
            CmaState::with_covariance(6, 4, 0, CovarianceMode::BlockDiagonal { block: 4 }).is_err()
        );
    }

    #[test]
    fn zero_step_size_collapses_onto_mean() {
        let mut s = CmaState::new(3, 5, 0).unwrap();
        s.set_mean(DVector::from_vec(vec![1.0, -2.0, 0.5])).unwrap();
        s.set_step_size(0.0);
        let pop = s.ask(&mut rng_from(3)).unwrap();
        for c in pop {
            assert_eq!(c.genome, vec![1.0, -2.0, 0.5]);
        }
    }

    #[test]
    fn candidates_carry_sampling_indices() {
        let s = CmaState::new(2, 5, 0).unwrap();
        let pop = s.ask(&mut rng_from(1)).unwrap();
        let idx: Vec<usize> = pop.iter().map(|c| c.index).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sampling_moments_match_standard_normal() {
        let s = CmaState::new(4, 6, 7).unwrap();
        let mut rng = rng_from(11);
        let draws = 100_000 / 6 + 1;
        let mut sum = [0.0f64; 4];
        let mut sq = [0.0f64; 4];
        let mut count = 0.0;
        for _ in 0..draws {
            for c in s.ask(&mut rng).unwrap() {
                for (i, v) in c.genome.iter().enumerate() {
                    sum[i] += v;
                    sq[i] += v * v;
                }
                count += 1.0;
            }
        }
        for i in 0..4 {
            let mean = sum[i] / count;
            let var = sq[i] / count - mean * mean;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.02, "var {var}");
        }
    }

    #[test]
    fn tie_break_uses_sampling_index() {
        let mut a = CmaState::new(3, 6, 0).unwrap();
        let mut pop = a.ask(&mut rng_from(5)).unwrap();
        for c in &mut pop {
            c.fitness = 1.0;
        }
        let expected: DVector<f64> = {
            let w = &a.params().weights;
            let mut m = DVector::zeros(3);
            for (wi, c) in w.iter().zip(&pop[..3]) {
                m.axpy(*wi, &DVector::from_column_slice(&c.genome), 1.0);
            }
            m
        };
        // Present the population in reverse; the elite must still be indices 0..3.
        let reversed: Vec<Candidate> = pop.iter().rev().cloned().collect();
        a.tell(&reversed).unwrap();
        assert!((a.mean() - expected).amax() < 1e-14);
    }

    #[test]
    fn non_finite_fitness_is_rejected() {
        let mut s = CmaState::new(2, 4, 0).unwrap();
        let mut pop = s.ask(&mut rng_from(0)).unwrap();
        for c in &mut pop {
            c.fitness = 0.0;
        }
        pop[2].fitness = f64::NAN;
        assert!(matches!(
            s.tell(&pop),
            Err(ForoError::NonFiniteFitness { index: 2, .. })
        ));
    }

    #[test]
    fn sphere_converges_below_threshold() {
        let mut s = CmaState::new(10, 10, 1).unwrap();
        s.set_mean(DVector::from_element(10, 3.0)).unwrap();
        let (best, curve) = minimize(&mut s, &mut rng_from(1), 300, sphere).unwrap();
        assert!(best.fitness < 1e-10, "best {}", best.fitness);
        assert!(curve.windows(2).all(|w| w[1] <= w[0]));
        assert!(best.genome.iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn block_diagonal_stays_block_diagonal() {
        let mut s =
            CmaState::with_covariance(6, 8, 0, CovarianceMode::BlockDiagonal { block: 3 }).unwrap();
        s.set_mean(DVector::from_element(6, 2.0)).unwrap();
        let (best, _) = minimize(&mut s, &mut rng_from(2), 150, sphere).unwrap();
        assert!(best.fitness < 1e-6);
        let c = s.covariance();
        for i in 0..3 {
            for j in 3..6 {
                assert_eq!(c[(i, j)], 0.0);
                assert_eq!(c[(j, i)], 0.0);
            }
        }
    }

    #[test]
    fn best_of_prefers_lowest_then_earliest() {
        let c = |f: f64, i: usize| Candidate {
            genome: vec![f],
            fitness: f,
            index: i,
        };
        assert_eq!(best_of(&[vec![c(0.5, 0)]]).unwrap().fitness, 0.5);
        assert_eq!(best_of(&[vec![c(0.5, 0), c(0.3, 1)]]).unwrap().fitness, 0.3);
        let tie = best_of(&[vec![c(0.2, 1), c(0.2, 0)], vec![c(0.2, 0)]]).unwrap();
        assert_eq!(tie.index, 0);
        assert!(matches!(best_of(&[]), Err(ForoError::EmptyHistory)));
    }
}
