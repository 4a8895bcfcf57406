//! Utility analysis: the good/bad vote gap, the success-probability lower
//! bound, and Monte-Carlo estimates of the success rate.
//!
//! With plain aggregate `v` and aggregate noise `N(0, sigma^2 I)`, the
//! winner is good with probability at least
//!
//! ```text
//! 1 - |bad| * sigma / (gamma * sqrt(pi)) * exp(-gamma^2 / (4 sigma^2))
//! ```
//!
//! where `gamma = min_good v - max_bad v`. The bound only makes a claim for
//! `gamma > 0`.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accountant::{calibrate_sigma, PrivacyBudget};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, seeded, Gaussian};
use crate::voting::{argmax, top_k_votes, LossVector};

/// `H_good` and `H_bad` as index sets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoodBadPartition {
    good: BTreeSet<usize>,
    bad: BTreeSet<usize>,
}

impl GoodBadPartition {
    pub fn new(good: impl IntoIterator<Item = usize>, bad: impl IntoIterator<Item = usize>) -> Result<Self> {
        let good: BTreeSet<usize> = good.into_iter().collect();
        let bad: BTreeSet<usize> = bad.into_iter().collect();
        if good.is_empty() {
            return Err(Error::invalid("good set must be nonempty"));
        }
        if let Some(j) = good.intersection(&bad).next() {
            return Err(Error::invalid(format!("candidate {j} is both good and bad")));
        }
        Ok(Self { good, bad })
    }

    /// `good` and every other index below `p` as bad.
    pub fn with_complement(good: impl IntoIterator<Item = usize>, p: usize) -> Result<Self> {
        let good: BTreeSet<usize> = good.into_iter().collect();
        if let Some(&j) = good.iter().find(|&&j| j >= p) {
            return Err(Error::invalid(format!("good index {j} out of range for p = {p}")));
        }
        let bad: Vec<usize> = (0..p).filter(|j| !good.contains(j)).collect();
        Self::new(good, bad)
    }

    /// The first `good_count` indices are good.
    pub fn leading(good_count: usize, p: usize) -> Result<Self> {
        if good_count > p {
            return Err(Error::invalid(format!("good count {good_count} exceeds p = {p}")));
        }
        Self::with_complement(0..good_count, p)
    }

    pub fn good(&self) -> &BTreeSet<usize> {
        &self.good
    }

    pub fn bad(&self) -> &BTreeSet<usize> {
        &self.bad
    }

    pub fn is_good(&self, j: usize) -> bool {
        self.good.contains(&j)
    }

    pub fn max_index(&self) -> usize {
        self.good.iter().chain(&self.bad).copied().max().unwrap_or(0)
    }
}

/// `min_{good} v[i] - max_{bad} v[j]`; negative when a bad candidate leads.
pub fn gap(plain_aggregate: &[f64], partition: &GoodBadPartition) -> Result<f64> {
    if partition.bad.is_empty() {
        return Err(Error::invalid("gap needs a nonempty bad set"));
    }
    if partition.max_index() >= plain_aggregate.len() {
        return Err(Error::invalid(format!(
            "partition index {} out of range for {} candidates",
            partition.max_index(),
            plain_aggregate.len()
        )));
    }
    let min_good = partition
        .good
        .iter()
        .map(|&j| plain_aggregate[j])
        .fold(f64::INFINITY, f64::min);
    let max_bad = partition
        .bad
        .iter()
        .map(|&j| plain_aggregate[j])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(min_good - max_bad)
}

/// Evaluated success-probability lower bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityBound {
    pub gamma: f64,
    pub h_bad_count: usize,
    pub sigma: f64,
    /// Union-bound failure mass `|bad| sigma / (gamma sqrt(pi)) exp(-gamma^2 / 4 sigma^2)`,
    /// kept separately because `1 - failure_mass` rounds to 1 long before
    /// the mass itself underflows.
    pub failure_mass: f64,
    /// `1 - failure_mass`, unclamped. May be very negative when vacuous.
    pub raw: f64,
}

impl UtilityBound {
    /// The bound as a probability, clamped to `[0, 1]`.
    pub fn lower_bound(&self) -> f64 {
        self.raw.clamp(0.0, 1.0)
    }

    pub fn is_vacuous(&self) -> bool {
        self.raw <= 0.0
    }
}

/// Outcome of evaluating the bound. The bound is undefined for `gamma <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundOutcome {
    Bound(UtilityBound),
    NotApplicable { gamma: f64 },
}

impl BoundOutcome {
    pub fn bound(&self) -> Option<&UtilityBound> {
        match self {
            BoundOutcome::Bound(b) => Some(b),
            BoundOutcome::NotApplicable { .. } => None,
        }
    }

    /// Clamped lower bound, `None` when not applicable.
    pub fn lower_bound(&self) -> Option<f64> {
        self.bound().map(UtilityBound::lower_bound)
    }
}

pub fn utility_lower_bound(gamma: f64, h_bad_count: usize, sigma: f64) -> Result<BoundOutcome> {
    if h_bad_count == 0 {
        return Err(Error::invalid("bad candidate count must be positive"));
    }
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma}")));
    }
    if gamma.is_nan() {
        return Err(Error::invalid("gap is NaN"));
    }
    if gamma <= 0.0 {
        return Ok(BoundOutcome::NotApplicable { gamma });
    }
    let failure_mass = if sigma == 0.0 {
        0.0
    } else {
        h_bad_count as f64 * sigma / (gamma * std::f64::consts::PI.sqrt())
            * (-(gamma * gamma) / (4.0 * sigma * sigma)).exp()
    };
    Ok(BoundOutcome::Bound(UtilityBound {
        gamma,
        h_bad_count,
        sigma,
        failure_mass,
        raw: 1.0 - failure_mass,
    }))
}

/// Success probability of picking uniformly at random.
pub fn random_guess_baseline(partition: &GoodBadPartition, p: usize) -> Result<f64> {
    if p == 0 || partition.max_index() >= p {
        return Err(Error::invalid("partition does not fit the candidate count"));
    }
    Ok(partition.good.len() as f64 / p as f64)
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    const Z: f64 = 1.959_963_984_540_054;
    let n = trials as f64;
    let phat = successes as f64 / n;
    let z2 = Z * Z;
    let denom = 1.0 + z2 / n;
    let centre = (phat + z2 / (2.0 * n)) / denom;
    let half = Z * (phat * (1.0 - phat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Mean of the good-candidate losses in the synthetic model.
pub const GOOD_LOSS_MEAN: f64 = 0.0;
/// Mean of the bad-candidate losses in the synthetic model.
pub const BAD_LOSS_MEAN: f64 = 1.0;

/// Synthetic-client simulation: good losses `N(0, sigma_loss^2)`, bad
/// losses `N(1, sigma_loss^2)`, iid across clients and candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub p: usize,
    pub good_count: usize,
    /// Positions of the good candidates; `None` means `0..good_count`.
    pub good_indices: Option<Vec<usize>>,
    pub n: usize,
    pub k: usize,
    pub sigma_loss: f64,
    pub repetitions: usize,
    pub budget: PrivacyBudget,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn new(p: usize, good_count: usize, n: usize, k: usize, sigma_loss: f64, budget: PrivacyBudget) -> Self {
        Self {
            p,
            good_count,
            good_indices: None,
            n,
            k,
            sigma_loss,
            repetitions: 5000,
            budget,
            seed: 0,
        }
    }

    pub fn repetitions(mut self, repetitions: usize) -> Self {
        self.repetitions = repetitions;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn good_indices(mut self, indices: Vec<usize>) -> Self {
        self.good_count = indices.len();
        self.good_indices = Some(indices);
        self
    }

    pub fn partition(&self) -> Result<GoodBadPartition> {
        match &self.good_indices {
            Some(idx) => {
                let set: BTreeSet<usize> = idx.iter().copied().collect();
                if set.len() != idx.len() {
                    return Err(Error::invalid("duplicate good indices"));
                }
                GoodBadPartition::with_complement(set, self.p)
            }
            None => GoodBadPartition::leading(self.good_count, self.p),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.p == 0 || self.n == 0 {
            return Err(Error::invalid("p and n must be positive"));
        }
        if self.good_count == 0 || self.good_count > self.p {
            return Err(Error::invalid(format!(
                "good count must lie in [1, p = {}], got {}",
                self.p, self.good_count
            )));
        }
        if self.k == 0 || self.k > self.p {
            return Err(Error::invalid(format!("k must lie in [1, p = {}], got {}", self.p, self.k)));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if !(self.sigma_loss >= 0.0) || !self.sigma_loss.is_finite() {
            return Err(Error::invalid("sigma_loss must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub success_rate: f64,
    pub successes: usize,
    pub repetitions: usize,
    pub wilson_95_interval: (f64, f64),
    pub mean_gamma: f64,
    pub sigma: f64,
}

impl SimulationResult {
    /// Binomial standard error of the success rate.
    pub fn std_error(&self) -> f64 {
        let r = self.success_rate;
        (r * (1.0 - r) / self.repetitions as f64).sqrt()
    }
}

/// Runs the vote -> per-client noise -> sum -> argmax pipeline
/// `repetitions` times. Repetition `r` draws from the stream
/// `derive_seed(seed, [r])`, so results do not depend on thread count.
pub fn simulate_success_rate(config: &SimulationConfig) -> Result<SimulationResult> {
    config.validate()?;
    let partition = config.partition()?;
    let calibration = calibrate_sigma(config.budget, config.k)?;
    let sigma = calibration.sigma;
    let means: Vec<f64> = (0..config.p)
        .map(|j| if partition.is_good(j) { GOOD_LOSS_MEAN } else { BAD_LOSS_MEAN })
        .collect();

    let outcomes: Vec<(bool, f64)> = (0..config.repetitions)
        .into_par_iter()
        .map(|rep| simulate_once(config, &partition, &means, sigma, derive_seed(config.seed, &[rep as u64])))
        .collect::<Result<_>>()?;

    let successes = outcomes.iter().filter(|(ok, _)| *ok).count();
    let finite_gaps: Vec<f64> = outcomes.iter().map(|(_, g)| *g).filter(|g| g.is_finite()).collect();
    let mean_gamma = if finite_gaps.is_empty() {
        f64::NAN
    } else {
        finite_gaps.iter().sum::<f64>() / finite_gaps.len() as f64
    };
    Ok(SimulationResult {
        success_rate: successes as f64 / config.repetitions as f64,
        successes,
        repetitions: config.repetitions,
        wilson_95_interval: wilson_interval(successes, config.repetitions),
        mean_gamma,
        sigma,
    })
}

fn simulate_once(
    config: &SimulationConfig,
    partition: &GoodBadPartition,
    means: &[f64],
    sigma: f64,
    seed: u64,
) -> Result<(bool, f64)> {
    let mut rng = seeded(seed);
    let mut gauss = Gaussian::new();
    let p = config.p;
    let mut plain = vec![0.0f64; p];
    let mut noisy = vec![0.0f64; p];
    let share_std = sigma / (config.n as f64).sqrt();
    let mut losses = vec![0.0f64; p];
    for _ in 0..config.n {
        for (l, &m) in losses.iter_mut().zip(means) {
            *l = gauss.sample_scaled(&mut rng, m, config.sigma_loss);
        }
        let ballot = top_k_votes(&LossVector::new(losses.clone())?, config.k)?;
        for j in ballot.voted() {
            plain[j] += 1.0;
        }
        if share_std > 0.0 {
            for z in noisy.iter_mut() {
                *z += share_std * gauss.sample(&mut rng);
            }
        }
    }
    for (z, v) in noisy.iter_mut().zip(&plain) {
        *z += v;
    }
    let winner = argmax(&noisy).expect("p >= 1");
    let gamma = if partition.bad().is_empty() {
        f64::INFINITY
    } else {
        gap(&plain, partition)?
    };
    Ok((partition.is_good(winner), gamma))
}
