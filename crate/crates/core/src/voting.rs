//! Client and coordinator sides of noisy top-k voting.
//!
//! A client ranks the public candidate list by its local losses, casts one
//! unweighted vote for each of its `k` best candidates and perturbs the
//! ballot with its Gaussian noise share before it leaves the device. The
//! coordinator only ever sees the sum and picks the argmax.

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::Gaussian;

/// One hyperparameter configuration: an ordered `name -> value` map.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Candidate {
    pub params: Vec<(String, String)>,
}

impl Candidate {
    pub fn new(params: Vec<(String, String)>) -> Self {
        Self { params }
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.params
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (name, value) in &self.params {
            if !first {
                f.write_str(",")?;
            }
            first = false;
            write!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

/// The public, ordered candidate set. Index `j` names candidate `j` for the
/// whole run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HyperparameterGrid {
    candidates: Vec<Candidate>,
}

impl HyperparameterGrid {
    pub fn new(candidates: Vec<Candidate>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::invalid("hyperparameter grid needs at least one candidate"));
        }
        Ok(Self { candidates })
    }

    /// Cross product of per-parameter value lists; the first parameter
    /// varies slowest.
    pub fn cross_product(axes: &[(String, Vec<String>)]) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::invalid("cross product needs at least one parameter"));
        }
        if let Some((name, _)) = axes.iter().find(|(_, vals)| vals.is_empty()) {
            return Err(Error::invalid(format!("parameter `{name}` has no candidate values")));
        }
        let mut out = vec![Candidate::default()];
        for (name, values) in axes {
            out = out
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut next = c.clone();
                        next.params.push((name.clone(), v.clone()));
                        next
                    })
                })
                .collect();
        }
        Self::new(out)
    }

    /// `p` candidates with a single `index` parameter.
    pub fn anonymous(p: usize) -> Result<Self> {
        Self::new(
            (0..p)
                .map(|j| Candidate::new(vec![("index".into(), j.to_string())]))
                .collect(),
        )
    }

    /// Learning rate (10) x decay (5) x momentum (2) = 100 SGD settings.
    pub fn sgd_demo() -> Self {
        let axis = |name: &str, vals: &[&str]| {
            (name.to_string(), vals.iter().map(|v| v.to_string()).collect::<Vec<_>>())
        };
        Self::cross_product(&[
            axis(
                "learning_rate",
                &["0.5", "0.1", "0.05", "1e-3", "5e-3", "1e-5", "1e-6", "5e-6", "5e-7", "1e-7"],
            ),
            axis("lr_decay", &["0.0", "0.1", "0.25", "0.99", "1.0"]),
            axis("momentum", &["0", "0.9"]),
        ])
        .expect("static grid is non-empty")
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn get(&self, index: usize) -> Option<&Candidate> {
        self.candidates.get(index)
    }
}

/// Per-candidate local losses of one client. Entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossVector {
    values: Vec<f64>,
}

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("loss vector is empty"));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "loss for candidate {j} is not finite ({})",
                values[j]
            )));
        }
        Ok(Self { values })
    }

    pub fn for_grid(grid: &HyperparameterGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "loss vector has {} entries, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A binary ballot with exactly `k` ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VoteVector {
    bits: Vec<u8>,
    k: usize,
}

impl VoteVector {
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("ballot entries must be 0 or 1"));
        }
        let k = bits.iter().filter(|&&b| b == 1).count();
        if k == 0 {
            return Err(Error::invalid("ballot must carry at least one vote"));
        }
        Ok(Self { bits, k })
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn voted(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(j, _)| j)
    }
}

/// A ballot after the client's noise share has been added.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisyVoteVector {
    values: Vec<f64>,
}

impl NoisyVoteVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Coordinate-wise sum of ballots (plain or noisy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateVotes {
    pub values: Vec<f64>,
    pub n_contributors: usize,
}

impl AggregateVotes {
    pub fn new(values: Vec<f64>, n_contributors: usize) -> Self {
        Self {
            values,
            n_contributors,
        }
    }
}

/// Marks the `k` smallest losses. Ties go to the lowest index.
pub fn top_k_votes(losses: &LossVector, k: usize) -> Result<VoteVector> {
    let p = losses.len();
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > p {
        return Err(Error::invalid(format!("k = {k} exceeds the number of candidates p = {p}")));
    }
    let values = losses.values();
    let mut order: Vec<usize> = (0..p).collect();
    let by_loss = |a: &usize, b: &usize| values[*a].total_cmp(&values[*b]).then(a.cmp(b));
    if k < p {
        order.select_nth_unstable_by(k - 1, by_loss);
    }
    let mut bits = vec![0u8; p];
    for &j in &order[..k] {
        bits[j] = 1;
    }
    Ok(VoteVector { bits, k })
}

/// Noise denominator when up to a fraction `dropout_tolerance` of the `n`
/// clients may fail: `ceil((1 - xi) * n)`, at least 1.
pub fn n_effective(n: usize, dropout_tolerance: f64) -> Result<usize> {
    if n == 0 {
        return Err(Error::invalid("client count must be positive"));
    }
    if !(0.0..1.0).contains(&dropout_tolerance) {
        return Err(Error::invalid(format!(
            "dropout tolerance must lie in [0, 1), got {dropout_tolerance}"
        )));
    }
    // Guard the ceiling against representation error, e.g. 0.8 * 10.
    let raw = (1.0 - dropout_tolerance) * n as f64;
    Ok(((raw - 1e-9).ceil() as usize).clamp(1, n))
}

/// Adds independent `N(0, sigma_total^2 / n_effective)` noise to every
/// coordinate of the ballot.
pub fn add_client_noise<R: RngCore + ?Sized>(
    votes: &VoteVector,
    sigma_total: f64,
    n_effective: usize,
    rng: &mut R,
) -> Result<NoisyVoteVector> {
    if !(sigma_total >= 0.0) || !sigma_total.is_finite() {
        return Err(Error::invalid(format!("sigma must be finite and >= 0, got {sigma_total}")));
    }
    if n_effective == 0 {
        return Err(Error::invalid("n_effective must be at least 1"));
    }
    let base = votes.bits.iter().map(|&b| b as f64);
    if sigma_total == 0.0 {
        return Ok(NoisyVoteVector::new(base.collect()));
    }
    let share_std = sigma_total / (n_effective as f64).sqrt();
    let mut gauss = Gaussian::new();
    Ok(NoisyVoteVector::new(
        base.map(|v| v + share_std * gauss.sample(rng)).collect(),
    ))
}

/// Plain (noise-free) vote counts. Test and analysis use only; the private
/// protocol never reveals this.
pub fn aggregate_plain(ballots: &[VoteVector]) -> Result<AggregateVotes> {
    let first = ballots
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty ballot list"))?;
    let p = first.len();
    let mut sums = vec![0u64; p];
    for b in ballots {
        if b.len() != p {
            return Err(Error::invalid(format!(
                "ballot lengths differ: {} vs {p}",
                b.len()
            )));
        }
        for (s, &bit) in sums.iter_mut().zip(&b.bits) {
            *s += bit as u64;
        }
    }
    Ok(AggregateVotes::new(
        sums.into_iter().map(|s| s as f64).collect(),
        ballots.len(),
    ))
}

/// In-the-clear sum of noisy ballots, the reference the secure sum must match.
pub fn aggregate_noisy(ballots: &[NoisyVoteVector]) -> Result<AggregateVotes> {
    let first = ballots
        .first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty ballot list"))?;
    let p = first.len();
    let mut sums = vec![0.0; p];
    for b in ballots {
        if b.len() != p {
            return Err(Error::invalid(format!(
                "ballot lengths differ: {} vs {p}",
                b.len()
            )));
        }
        for (s, v) in sums.iter_mut().zip(&b.values) {
            *s += v;
        }
    }
    Ok(AggregateVotes::new(sums, ballots.len()))
}

/// Argmax with lowest-index tie-break.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((j, v)),
        }
    }
    best.map(|(j, _)| j)
}

pub fn select_winner(aggregate: &AggregateVotes) -> Result<usize> {
    argmax(&aggregate.values).ok_or_else(|| Error::invalid("aggregate has no coordinates"))
}
