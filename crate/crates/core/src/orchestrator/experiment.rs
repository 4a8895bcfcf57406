//! Experiment sweeps: every epsilon in the budget list times every
//! repetition, one protocol round each.

use std::collections::BTreeSet;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{
    DatasetSpec, EmptyShardPolicy, ExperimentConfig, GoodSpec, GridSpec, OracleSpec, PartitionSpec,
    DEFAULT_GOOD_COUNT,
};
use super::round::{run_round, FailurePlan, RoundInput};
use super::transport::{Transport, TransportKind};
use crate::accountant::{calibrate_sigma, NoiseCalibration, PrivacyBudget};
use crate::error::{Error, Result};
use crate::partition::{
    dirichlet_partition, iid_partition, ClientShard, DirichletSpec, LossOracle, SeparatedGaussianOracle,
    ShardModulation, SyntheticDataset, TableOracle,
};
use crate::sampling::{bounded, derive_seed, seeded};
use crate::securesum::{FixedPointCodec, DEFAULT_CLAMP_RANGE, DEFAULT_RING_BITS};
use crate::utility::{gap, random_guess_baseline, utility_lower_bound, wilson_interval, GoodBadPartition};
use crate::voting::{argmax, Candidate, HyperparameterGrid};

const STREAM_PARTITION: u64 = 0xDA7A;
const STREAM_DROPOUTS: u64 = 0xD809;

/// A config turned into concrete clients, candidates and an oracle.
pub struct ResolvedExperiment {
    pub grid: HyperparameterGrid,
    pub shards: Vec<ClientShard>,
    pub oracle: Box<dyn LossOracle>,
    /// Clients left out under [`EmptyShardPolicy::Exclude`].
    pub excluded_empty: usize,
}

fn resolve_err(field: &str, e: impl std::fmt::Display) -> Error {
    Error::Config {
        line: 0,
        field: field.to_string(),
        message: e.to_string(),
    }
}

fn build_grid(spec: &GridSpec, table: Option<&TableOracle>) -> Result<HyperparameterGrid> {
    let grid = match spec {
        GridSpec::Demo => HyperparameterGrid::sgd_demo(),
        GridSpec::Anonymous(p) => HyperparameterGrid::anonymous(*p)?,
        GridSpec::CrossProduct(axes) => HyperparameterGrid::cross_product(axes)?,
        GridSpec::Explicit(list) => HyperparameterGrid::new(list.clone())?,
        GridSpec::FromTable => {
            let table = table.ok_or_else(|| resolve_err("grid", "a table grid needs the table oracle"))?;
            HyperparameterGrid::new(
                table
                    .candidate_names()
                    .iter()
                    .map(|name| Candidate::new(vec![("name".into(), name.clone())]))
                    .collect(),
            )?
        }
    };
    Ok(grid)
}

pub fn resolve(config: &ExperimentConfig) -> Result<ResolvedExperiment> {
    match &config.oracle {
        OracleSpec::Table { path, good } => {
            let mut table = TableOracle::from_csv(path)?;
            let grid = build_grid(&config.grid, Some(&table)).map_err(|e| resolve_err("grid", e))?;
            if grid.len() != table.candidate_names().len() {
                return Err(resolve_err(
                    "grid",
                    format!(
                        "grid has {} candidates but the loss table has {}",
                        grid.len(),
                        table.candidate_names().len()
                    ),
                ));
            }
            if let Some(n) = config.n {
                if n != table.client_count() {
                    return Err(resolve_err(
                        "n",
                        format!("n = {n} but the loss table has {} clients", table.client_count()),
                    ));
                }
            }
            if let Some(good) = good {
                if let Some(&bad) = good.iter().find(|&&j| j >= grid.len()) {
                    return Err(resolve_err("oracle.good", format!("index {bad} out of range")));
                }
                table = table.with_good(good.iter().copied());
            }
            let shards = table.client_ids().map(ClientShard::bare).collect();
            Ok(ResolvedExperiment {
                grid,
                shards,
                oracle: Box::new(table),
                excluded_empty: 0,
            })
        }
        OracleSpec::SeparatedGaussian {
            sigma_loss,
            good,
            modulate,
        } => {
            let grid = build_grid(&config.grid, None).map_err(|e| resolve_err("grid", e))?;
            let p = grid.len();
            let good: BTreeSet<usize> = match good {
                None => (0..DEFAULT_GOOD_COUNT.min(p)).collect(),
                Some(GoodSpec::Leading(c)) if *c == 0 || *c > p => {
                    return Err(resolve_err("oracle.good_count", format!("must lie in [1, {p}]")))
                }
                Some(GoodSpec::Leading(c)) => (0..*c).collect(),
                Some(GoodSpec::Indices(idx)) => {
                    if let Some(&bad) = idx.iter().find(|&&j| j >= p) {
                        return Err(resolve_err("oracle.good", format!("index {bad} out of range for {p} candidates")));
                    }
                    idx.iter().copied().collect()
                }
            };
            let mut oracle = SeparatedGaussianOracle::new(good, *sigma_loss).map_err(|e| resolve_err("oracle.sigma_loss", e))?;
            if let Some(reference_size) = modulate {
                oracle = oracle.with_modulation(ShardModulation {
                    reference_size: *reference_size,
                });
            }

            let n = config.n.ok_or_else(|| resolve_err("n", "client count is required"))?;
            let dataset = match &config.dataset {
                DatasetSpec::Balanced { items, labels } => {
                    SyntheticDataset::balanced(*items, *labels).map_err(|e| resolve_err("dataset.items", e))?
                }
                DatasetSpec::File(path) => SyntheticDataset::from_csv(path)?,
            };
            let seed = derive_seed(config.seed, &[STREAM_PARTITION]);
            let shards = match config.partition {
                PartitionSpec::Iid => iid_partition(&dataset, n, seed).map_err(|e| resolve_err("n", e))?,
                PartitionSpec::Dirichlet { alpha } => {
                    let spec = DirichletSpec::new(alpha, n, seed).map_err(|e| resolve_err("partition.alpha", e))?;
                    dirichlet_partition(&dataset, &spec)?
                }
            };
            let before = shards.len();
            let shards: Vec<ClientShard> = match config.empty_shards {
                EmptyShardPolicy::Exclude => shards.into_iter().filter(|s| !s.is_empty()).collect(),
                EmptyShardPolicy::Prior => shards,
            };
            Ok(ResolvedExperiment {
                grid,
                excluded_empty: before - shards.len(),
                shards,
                oracle: Box::new(oracle),
            })
        }
    }
}

/// One `(epsilon, repetition)` round.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub epsilon: f64,
    pub rep: usize,
    pub seed: u64,
    pub winner: usize,
    /// Argmin of the summed oracle losses.
    pub opt: usize,
    /// Gap on the contributors' plain votes; `None` when every candidate is
    /// good.
    pub gamma: Option<f64>,
    /// Clamped success lower bound; `None` when the gap is not positive.
    pub bound: Option<f64>,
    pub success: bool,
    /// Standard deviation of the noise actually summed.
    pub sigma: f64,
    pub private: bool,
    pub contributors: usize,
    pub n_effective: usize,
    pub rerun: bool,
    pub clamped: usize,
    pub transcript_hash: String,
    pub aborted_hash: Option<String>,
    pub wall_clock_ms: f64,
    pub plain_aggregate: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSummary {
    pub epsilon: f64,
    pub private: bool,
    pub calibration: NoiseCalibration,
    pub repetitions: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub wilson_95: (f64, f64),
    /// Fraction of rounds whose winner equals Opt.
    pub opt_agreement: f64,
    pub rand_guess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub p: usize,
    pub n: usize,
    pub k: usize,
    pub delta: f64,
    pub seed: u64,
    pub transport: TransportKind,
    pub oracle: String,
    pub excluded_empty: usize,
    pub test_mode: bool,
    pub records: Vec<RunRecord>,
    pub summary: Vec<EpsilonSummary>,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let resolved = resolve(config)?;
    let transport = config.transport.build();
    run_resolved(config, &resolved, transport.as_ref())
}

/// Runs the sweep on an already resolved experiment and a caller-chosen
/// transport.
pub fn run_resolved(
    config: &ExperimentConfig,
    resolved: &ResolvedExperiment,
    transport: &dyn Transport,
) -> Result<RunReport> {
    let p = resolved.grid.len();
    let n = resolved.shards.len();
    if n == 0 {
        return Err(resolve_err("n", "every client has an empty shard"));
    }
    if config.k > p {
        return Err(resolve_err("k", format!("k = {} exceeds the {p} candidates", config.k)));
    }
    if config.dropouts >= n {
        return Err(resolve_err("dropouts", format!("must be below the {n} participating clients")));
    }
    let codec = FixedPointCodec::new(config.fractional_bits, DEFAULT_RING_BITS, DEFAULT_CLAMP_RANGE)
        .map_err(|e| resolve_err("fractional_bits", e))?;

    let calibrations = config
        .epsilons
        .iter()
        .map(|&eps| {
            let budget = if eps.is_infinite() {
                PrivacyBudget::non_private(config.delta)
            } else {
                PrivacyBudget::new(eps, config.delta)
            }
            .map_err(|e| resolve_err("epsilons", e))?;
            calibrate_sigma(budget, config.k)
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..config.epsilons.len())
        .flat_map(|e| (0..config.repetitions).map(move |r| (e, r)))
        .collect();
    let run_job = |&(e, rep): &(usize, usize)| {
        one_round(config, resolved, transport, codec, calibrations[e], e, rep)
    };
    let records: Vec<RunRecord> = if transport.name() == "memory" {
        jobs.par_iter().map(run_job).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run_job).collect::<Result<_>>()?
    };

    let summary = config
        .epsilons
        .iter()
        .zip(&calibrations)
        .enumerate()
        .map(|(e, (&epsilon, &calibration))| {
            let rows = &records[e * config.repetitions..(e + 1) * config.repetitions];
            summarize(epsilon, calibration, rows, resolved, p)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RunReport {
        p,
        n,
        k: config.k,
        delta: config.delta,
        seed: config.seed,
        transport: config.transport,
        oracle: resolved.oracle.name().to_string(),
        excluded_empty: resolved.excluded_empty,
        test_mode: config.test_mode,
        records,
        summary,
    })
}

fn summarize(
    epsilon: f64,
    calibration: NoiseCalibration,
    rows: &[RunRecord],
    resolved: &ResolvedExperiment,
    p: usize,
) -> Result<EpsilonSummary> {
    let successes = rows.iter().filter(|r| r.success).count();
    let agree = rows.iter().filter(|r| r.winner == r.opt).count();
    let total = rows.len();
    let rand_guess = match resolved.oracle.good_candidates() {
        Some(good) => random_guess_baseline(&GoodBadPartition::with_complement(good.iter().copied(), p)?, p)?,
        None => 1.0 / p as f64,
    };
    let rate = |c: usize| if total == 0 { f64::NAN } else { c as f64 / total as f64 };
    Ok(EpsilonSummary {
        epsilon,
        private: epsilon.is_finite(),
        calibration,
        repetitions: total,
        successes,
        success_rate: rate(successes),
        wilson_95: wilson_interval(successes, total),
        opt_agreement: rate(agree),
        rand_guess,
    })
}

fn one_round(
    config: &ExperimentConfig,
    resolved: &ResolvedExperiment,
    transport: &dyn Transport,
    codec: FixedPointCodec,
    calibration: NoiseCalibration,
    eps_index: usize,
    rep: usize,
) -> Result<RunRecord> {
    let start = Instant::now();
    let n = resolved.shards.len();
    let seed = derive_seed(config.seed, &[eps_index as u64, rep as u64]);

    let mut positions: Vec<usize> = (0..n).collect();
    let mut rng = seeded(derive_seed(seed, &[STREAM_DROPOUTS]));
    let mut first_attempt = Vec::with_capacity(config.dropouts);
    for _ in 0..config.dropouts {
        let j = bounded(&mut rng, positions.len() as u64) as usize;
        first_attempt.push(positions.swap_remove(j));
    }
    let mut second_attempt = Vec::with_capacity(config.rerun_dropouts);
    for _ in 0..config.rerun_dropouts.min(positions.len()) {
        let j = bounded(&mut rng, positions.len() as u64) as usize;
        second_attempt.push(positions.swap_remove(j));
    }
    first_attempt.sort_unstable();
    second_attempt.sort_unstable();
    let failures = FailurePlan {
        first_attempt,
        second_attempt,
    };

    let input = RoundInput {
        round_id: (eps_index * config.repetitions + rep) as u64,
        grid: &resolved.grid,
        shards: &resolved.shards,
        oracle: resolved.oracle.as_ref(),
        sigma: calibration.sigma,
        k: config.k,
        dropout_tolerance: config.dropout_tolerance,
        codec,
        seed,
        failures: &failures,
    };
    let out = run_round(&input, transport)?;

    let p = resolved.grid.len();
    let opt = argmin(&out.loss_totals);
    let good: BTreeSet<usize> = match resolved.oracle.good_candidates() {
        Some(g) => g.clone(),
        None => [opt].into(),
    };
    let partition = GoodBadPartition::with_complement(good.iter().copied(), p)?;
    let m = out.contributors.len();
    let sigma = calibration.sigma * (m as f64 / out.n_effective as f64).sqrt();
    let (gamma, bound) = if partition.bad().is_empty() {
        (None, None)
    } else {
        let g = gap(&out.plain_aggregate.values, &partition)?;
        (Some(g), utility_lower_bound(g, partition.bad().len(), sigma)?.lower_bound())
    };

    Ok(RunRecord {
        epsilon: config.epsilons[eps_index],
        rep,
        seed,
        winner: out.winner,
        opt,
        gamma,
        bound,
        success: good.contains(&out.winner),
        sigma,
        private: calibration.sigma > 0.0,
        contributors: m,
        n_effective: out.n_effective,
        rerun: out.aborted.is_some(),
        clamped: out.clamped,
        transcript_hash: out.transcript.hash(),
        aborted_hash: out.aborted.as_ref().map(|t| t.hash()),
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
        plain_aggregate: config.test_mode.then(|| out.plain_aggregate.values.clone()),
    })
}

/// Argmin with ties to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let negated: Vec<f64> = values.iter().map(|v| -v).collect();
    argmax(&negated).unwrap_or(0)
}
