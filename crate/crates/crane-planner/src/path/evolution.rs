//! Rank-weighted evolution loop over flattened control points.
//!
//! Each step samples a population from `N(mean, sigma^2 C)`, scores it with
//! one batched cost call, recombines the elites with log-rank weights, and
//! rebuilds the covariance around the updated mean plus a stabilizing jitter.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Elite recombination weights `w_j` proportional to `ln(nu + 0.5) - ln(j)`,
/// normalized to sum to one. Strictly decreasing and positive.
pub fn log_rank_weights(nu: usize) -> DVector<f64> {
    assert!(nu >= 1, "elite count must be at least 1");
    let c = (nu as f64 + 0.5).ln();
    let raw: Vec<f64> = (1..=nu).map(|j| c - (j as f64).ln()).collect();
    let sum: f64 = raw.iter().sum();
    DVector::from_iterator(nu, raw.into_iter().map(|w| w / sum))
}

/// Search distribution over the flattened free control points.
#[derive(Debug, Clone)]
pub struct DistributionState {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    /// Global step size multiplying the covariance as `sigma^2 C`. Fixed by
    /// the loop; all adaptation lives in the covariance.
    pub sigma: f64,
}

impl DistributionState {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>, sigma: f64) -> Result<Self> {
        if covariance.nrows() != mean.len() || covariance.ncols() != mean.len() {
            return Err(Error::contract(
                "covariance dimensions do not match the mean".to_string(),
            ));
        }
        if sigma <= 0.0 {
            return Err(Error::contract("sigma must be positive".to_string()));
        }
        Ok(DistributionState {
            mean,
            covariance,
            sigma,
        })
    }

    /// Diagonal initial distribution with per-component standard deviation
    /// `sigma * scale[i]`.
    pub fn diagonal(mean: DVector<f64>, scales: &DVector<f64>, sigma: f64) -> Result<Self> {
        let n = mean.len();
        if scales.len() != n {
            return Err(Error::contract(
                "scale vector does not match the mean".to_string(),
            ));
        }
        let covariance = DMatrix::from_diagonal(&scales.map(|s| s * s));
        Self::new(mean, covariance, sigma)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// One draw from `N(mean, sigma^2 C)` using the given stream.
    pub fn sample(&self, factor: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.sigma * (factor * z)
    }

    /// Lower Cholesky factor of the covariance, resetting to `sigma^2 I`
    /// when the matrix has lost positive definiteness.
    fn factor_or_reset(&mut self) -> DMatrix<f64> {
        match self.covariance.clone().cholesky() {
            Some(chol) => chol.l(),
            None => {
                log::warn!(
                    "covariance lost positive definiteness; resetting to sigma^2 I"
                );
                self.covariance =
                    DMatrix::identity(self.dim(), self.dim()) * (self.sigma * self.sigma);
                self.covariance.clone().cholesky().expect("spd").l()
            }
        }
    }
}

/// Loop parameters.
#[derive(Debug, Clone)]
pub struct EvolutionConfig {
    /// Population size.
    pub lambda: usize,
    /// Elite count.
    pub nu: usize,
    pub max_iters: usize,
    /// Stop once the best cost drops to this value or below.
    pub cost_tolerance: f64,
    /// Covariance jitter added every update.
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            lambda: 100,
            nu: 20,
            max_iters: 300,
            cost_tolerance: 0.0,
            epsilon: 1e-8,
            rng_seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu == 0 || self.nu > self.lambda {
            return Err(Error::contract(format!(
                "elite count {} must lie in 1..={}",
                self.nu, self.lambda
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::contract("epsilon must be positive".to_string()));
        }
        Ok(())
    }
}

/// Outcome of one generation.
#[derive(Debug, Clone)]
pub struct EvolveOutcome {
    pub state: DistributionState,
    pub best_sample: DVector<f64>,
    pub best_cost: f64,
}

/// One generation: sample `lambda` candidates, score them with a single
/// batched call, recombine the `nu` cheapest with log-rank weights, and
/// rebuild the covariance around the updated mean (jittered by
/// `epsilon I`). Ties sort by sample index, so the step is deterministic
/// for a fixed RNG stream regardless of how the cost call parallelizes.
pub fn evolve_step<F>(
    dist: &DistributionState,
    config: &EvolutionConfig,
    rng: &mut ChaCha8Rng,
    mut batch_cost: F,
) -> Result<EvolveOutcome>
where
    F: FnMut(&[DVector<f64>]) -> Result<Vec<f64>>,
{
    config.validate()?;
    let mut state = dist.clone();
    let factor = state.factor_or_reset();

    let samples: Vec<DVector<f64>> = (0..config.lambda)
        .map(|_| state.sample(&factor, rng))
        .collect();
    let costs = batch_cost(&samples)?;
    if costs.len() != samples.len() {
        return Err(Error::contract(format!(
            "cost batch returned {} values for {} samples",
            costs.len(),
            samples.len()
        )));
    }

    let mut order: Vec<usize> = (0..config.lambda).collect();
    order.sort_by(|&a, &b| {
        costs[a]
            .partial_cmp(&costs[b])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });

    let weights = log_rank_weights(config.nu);
    let dim = state.dim();
    let mut mean = DVector::zeros(dim);
    for (rank, &idx) in order.iter().take(config.nu).enumerate() {
        mean += weights[rank] * &samples[idx];
    }
    let mut covariance = DMatrix::identity(dim, dim) * config.epsilon;
    for (rank, &idx) in order.iter().take(config.nu).enumerate() {
        let delta = &samples[idx] - &mean;
        covariance += weights[rank] * &delta * delta.transpose();
    }
    state.mean = mean;
    state.covariance = covariance;

    let best = order[0];
    Ok(EvolveOutcome {
        state,
        best_sample: samples[best].clone(),
        best_cost: costs[best],
    })
}
