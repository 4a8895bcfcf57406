//! Synthetic client populations and the loss oracles that stand in for
//! local model evaluation.
//!
//! Shards are index sets into a labelled [`SyntheticDataset`]. `iid` shards
//! are a seeded shuffle dealt round-robin; `dirichlet` shards split every
//! label independently by `Dirichlet(alpha_dir * 1_n)` proportions, rounded to
//! item counts by largest remainder after a seeded within-label shuffle.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{derive_seed, dirichlet_symmetric, seeded, shuffle, CounterStream, Gaussian};
use crate::utility::{GoodBadPartition, BAD_LOSS_MEAN, GOOD_LOSS_MEAN};
use crate::voting::{HyperparameterGrid, LossVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataItem {
    pub id: u64,
    pub label: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    items: Vec<DataItem>,
    label_count: usize,
}

impl SyntheticDataset {
    pub fn new(items: Vec<DataItem>, label_count: usize) -> Result<Self> {
        if label_count == 0 {
            return Err(Error::invalid("label count must be positive"));
        }
        if let Some(item) = items.iter().find(|it| it.label as usize >= label_count) {
            return Err(Error::invalid(format!(
                "item {} has label {} outside 0..{label_count}",
                item.id, item.label
            )));
        }
        Ok(Self { items, label_count })
    }

    /// `size` items with labels dealt cyclically, so every label gets
    /// `size / label_count` items (+1 for the first few).
    pub fn balanced(size: usize, label_count: usize) -> Result<Self> {
        if label_count == 0 {
            return Err(Error::invalid("label count must be positive"));
        }
        Self::new(
            (0..size)
                .map(|i| DataItem {
                    id: i as u64,
                    label: (i % label_count) as u32,
                })
                .collect(),
            label_count,
        )
    }

    /// Reads `id,label` rows (header required). The label count is one past
    /// the largest label seen.
    pub fn from_csv_reader<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let csv_err = |source| Error::Csv {
            path: origin.to_path_buf(),
            source,
        };
        let mut items = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize, name: &str| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::Config {
                    line: line + 2,
                    field: name.into(),
                    message: "missing column".into(),
                })
            };
            let parse_err = |name: &str, raw: &str| Error::Config {
                line: line + 2,
                field: name.into(),
                message: format!("not an unsigned integer: `{raw}`"),
            };
            let id_raw = field(0, "id")?;
            let label_raw = field(1, "label")?;
            items.push(DataItem {
                id: id_raw.parse().map_err(|_| parse_err("id", id_raw))?,
                label: label_raw.parse().map_err(|_| parse_err("label", label_raw))?,
            });
        }
        let label_count = items.iter().map(|it| it.label as usize + 1).max().unwrap_or(1);
        Self::new(items, label_count)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f, path)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn items(&self) -> &[DataItem] {
        &self.items
    }

    fn indices_by_label(&self) -> Vec<Vec<usize>> {
        let mut by_label = vec![Vec::new(); self.label_count];
        for (i, it) in self.items.iter().enumerate() {
            by_label[it.label as usize].push(i);
        }
        by_label
    }
}

/// One client's local data: item indices into the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub items: Vec<usize>,
    pub label_histogram: Vec<usize>,
}

impl ClientShard {
    fn build(client_id: usize, mut items: Vec<usize>, dataset: &SyntheticDataset) -> Self {
        items.sort_unstable();
        let mut label_histogram = vec![0; dataset.label_count];
        for &i in &items {
            label_histogram[dataset.items[i].label as usize] += 1;
        }
        Self {
            client_id,
            items,
            label_histogram,
        }
    }

    /// Shard carrying only an id, for oracles that ignore the data.
    pub fn bare(client_id: usize) -> Self {
        Self {
            client_id,
            items: Vec::new(),
            label_histogram: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Share of the most frequent label, 0 for an empty shard.
    pub fn top_label_share(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        *self.label_histogram.iter().max().unwrap_or(&0) as f64 / self.items.len() as f64
    }
}

/// Concentration and client count for non-iid splits. `alpha_dir` is a
/// Dirichlet concentration, unrelated to Rényi orders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirichletSpec {
    pub alpha_dir: f64,
    pub n: usize,
    pub seed: u64,
}

impl DirichletSpec {
    pub fn new(alpha_dir: f64, n: usize, seed: u64) -> Result<Self> {
        if !(alpha_dir > 0.0) || !alpha_dir.is_finite() {
            return Err(Error::invalid(format!(
                "Dirichlet concentration must be positive and finite, got {alpha_dir}"
            )));
        }
        if n == 0 {
            return Err(Error::invalid("client count must be positive"));
        }
        Ok(Self { alpha_dir, n, seed })
    }
}

pub fn iid_partition(dataset: &SyntheticDataset, n: usize, seed: u64) -> Result<Vec<ClientShard>> {
    if n == 0 {
        return Err(Error::invalid("client count must be positive"));
    }
    if n > dataset.len() {
        return Err(Error::invalid(format!(
            "cannot split {} items across {n} clients",
            dataset.len()
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    shuffle(&mut order, &mut seeded(derive_seed(seed, &[0x11D])));
    let mut buckets = vec![Vec::with_capacity(dataset.len() / n + 1); n];
    for (pos, idx) in order.into_iter().enumerate() {
        buckets[pos % n].push(idx);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(c, items)| ClientShard::build(c, items, dataset))
        .collect())
}

/// Integer counts summing to `total`, proportional to `weights`, by the
/// largest-remainder method. Ties in the remainder go to the lower index.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &j in order.iter().take(total.saturating_sub(assigned)) {
        counts[j] += 1;
    }
    counts
}

pub fn dirichlet_partition(dataset: &SyntheticDataset, spec: &DirichletSpec) -> Result<Vec<ClientShard>> {
    let spec = DirichletSpec::new(spec.alpha_dir, spec.n, spec.seed)?;
    let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); spec.n];
    for (label, mut indices) in dataset.indices_by_label().into_iter().enumerate() {
        let mut rng = seeded(derive_seed(spec.seed, &[0xD1, label as u64]));
        let mut gauss = Gaussian::new();
        shuffle(&mut indices, &mut rng);
        let q = dirichlet_symmetric(spec.alpha_dir, spec.n, &mut gauss, &mut rng);
        let counts = largest_remainder(&q, indices.len());
        let mut rest = indices.as_slice();
        for (bucket, &count) in buckets.iter_mut().zip(&counts) {
            let (take, tail) = rest.split_at(count);
            bucket.extend_from_slice(take);
            rest = tail;
        }
        debug_assert!(rest.is_empty());
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(c, items)| ClientShard::build(c, items, dataset))
        .collect())
}

/// Deterministic local loss `L(D_i, H_j)`.
pub trait LossOracle: Send + Sync {
    fn name(&self) -> &str;

    fn loss(&self, shard: &ClientShard, candidate: usize, seed: u64) -> Result<f64>;

    /// Good candidates, when the oracle knows them.
    fn good_candidates(&self) -> Option<&BTreeSet<usize>> {
        None
    }
}

/// Optional per-shard scaling of the loss spread: small shards and
/// label-skewed shards produce noisier local evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShardModulation {
    /// Shard size at which the size factor is 1.
    pub reference_size: f64,
}

/// Good candidates draw losses from `N(0, s^2)`, bad ones from `N(1, s^2)`.
///
/// Without modulation `s = sigma_loss`. With modulation
/// `s = sigma_loss * sqrt(reference_size / |D_i|) * (1 + skew_i)` where
/// `skew_i` in `[0, 1]` is the top-label share rescaled so a uniform label
/// histogram gives 0 and a single-label shard gives 1. Empty shards fall
/// back to `s = sigma_loss`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedGaussianOracle {
    good: BTreeSet<usize>,
    sigma_loss: f64,
    modulation: Option<ShardModulation>,
}

impl SeparatedGaussianOracle {
    pub fn new(good: impl IntoIterator<Item = usize>, sigma_loss: f64) -> Result<Self> {
        if !(sigma_loss >= 0.0) || !sigma_loss.is_finite() {
            return Err(Error::invalid(format!("sigma_loss must be finite and >= 0, got {sigma_loss}")));
        }
        let good: BTreeSet<usize> = good.into_iter().collect();
        if good.is_empty() {
            return Err(Error::invalid("separated oracle needs at least one good candidate"));
        }
        Ok(Self {
            good,
            sigma_loss,
            modulation: None,
        })
    }

    pub fn with_modulation(mut self, modulation: ShardModulation) -> Self {
        self.modulation = Some(modulation);
        self
    }

    pub fn sigma_loss(&self) -> f64 {
        self.sigma_loss
    }

    pub fn partition(&self, p: usize) -> Result<GoodBadPartition> {
        GoodBadPartition::with_complement(self.good.iter().copied(), p)
    }

    /// Loss spread for a given shard.
    pub fn effective_sigma(&self, shard: &ClientShard) -> f64 {
        match self.modulation {
            Some(m) if !shard.is_empty() => {
                let size_factor = (m.reference_size / shard.len() as f64).sqrt();
                let labels = shard.label_histogram.len().max(1) as f64;
                let skew = if labels > 1.0 {
                    ((shard.top_label_share() - 1.0 / labels) / (1.0 - 1.0 / labels)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                self.sigma_loss * size_factor * (1.0 + skew)
            }
            _ => self.sigma_loss,
        }
    }
}

impl LossOracle for SeparatedGaussianOracle {
    fn name(&self) -> &str {
        "separated-gaussian"
    }

    fn loss(&self, shard: &ClientShard, candidate: usize, seed: u64) -> Result<f64> {
        let mean = if self.good.contains(&candidate) {
            GOOD_LOSS_MEAN
        } else {
            BAD_LOSS_MEAN
        };
        let std = self.effective_sigma(shard);
        if std == 0.0 {
            return Ok(mean);
        }
        let mut stream = CounterStream::new(derive_seed(seed, &[shard.client_id as u64, candidate as u64]));
        Ok(Gaussian::new().sample_scaled(&mut stream, mean, std))
    }

    fn good_candidates(&self) -> Option<&BTreeSet<usize>> {
        Some(&self.good)
    }
}

/// Explicit per-client loss matrix.
///
/// File format: CSV with header `client,<candidate 0>,...,<candidate p-1>`
/// and one row per client id with real-valued losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOracle {
    candidate_names: Vec<String>,
    rows: BTreeMap<usize, Vec<f64>>,
    good: Option<BTreeSet<usize>>,
}

impl TableOracle {
    pub fn new(candidate_names: Vec<String>, rows: BTreeMap<usize, Vec<f64>>) -> Result<Self> {
        let p = candidate_names.len();
        if p == 0 {
            return Err(Error::invalid("loss table has no candidates"));
        }
        if let Some((c, r)) = rows.iter().find(|(_, r)| r.len() != p) {
            return Err(Error::invalid(format!(
                "loss table row for client {c} has {} entries, expected {p}",
                r.len()
            )));
        }
        Ok(Self {
            candidate_names,
            rows,
            good: None,
        })
    }

    /// Rows indexed by client id `0..rows.len()`.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        Self::new(
            (0..p).map(|j| format!("h{j}")).collect(),
            rows.into_iter().enumerate().collect(),
        )
    }

    pub fn with_good(mut self, good: impl IntoIterator<Item = usize>) -> Self {
        self.good = Some(good.into_iter().collect());
        self
    }

    pub fn from_csv_reader<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let csv_err = |source| Error::Csv {
            path: origin.to_path_buf(),
            source,
        };
        let header = rdr.headers().map_err(csv_err)?.clone();
        if header.len() < 2 {
            return Err(Error::Config {
                line: 1,
                field: "header".into(),
                message: "expected `client` followed by candidate names".into(),
            });
        }
        let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut rows = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let line = i + 2;
            let client: usize = rec[0].parse().map_err(|_| Error::Config {
                line,
                field: "client".into(),
                message: format!("not a client id: `{}`", &rec[0]),
            })?;
            let values = rec
                .iter()
                .skip(1)
                .zip(&names)
                .map(|(raw, name)| {
                    raw.parse::<f64>().map_err(|_| Error::Config {
                        line,
                        field: name.clone(),
                        message: format!("not a number: `{raw}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if rows.insert(client, values).is_some() {
                return Err(Error::Config {
                    line,
                    field: "client".into(),
                    message: format!("duplicate client id {client}"),
                });
            }
        }
        Self::new(names, rows)
    }

    pub fn from_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_reader(f, path)
    }

    pub fn candidate_names(&self) -> &[String] {
        &self.candidate_names
    }

    pub fn client_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    pub fn client_count(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, client: usize) -> Option<&[f64]> {
        self.rows.get(&client).map(Vec::as_slice)
    }
}

impl LossOracle for TableOracle {
    fn name(&self) -> &str {
        "table"
    }

    fn loss(&self, shard: &ClientShard, candidate: usize, _seed: u64) -> Result<f64> {
        let row = self.rows.get(&shard.client_id).ok_or_else(|| Error::OracleFailure {
            candidate,
            reason: format!("no loss row for client {}", shard.client_id),
        })?;
        row.get(candidate).copied().ok_or_else(|| Error::OracleFailure {
            candidate,
            reason: format!("table has only {} candidates", row.len()),
        })
    }

    fn good_candidates(&self) -> Option<&BTreeSet<usize>> {
        self.good.as_ref()
    }
}

/// Evaluates every candidate of `grid` on one shard.
pub fn evaluate_losses(
    oracle: &dyn LossOracle,
    shard: &ClientShard,
    grid: &HyperparameterGrid,
    seed: u64,
) -> Result<LossVector> {
    let values = (0..grid.len())
        .map(|j| {
            let v = oracle.loss(shard, j, seed)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::OracleFailure {
                    candidate: j,
                    reason: format!("{} oracle returned {v}", oracle.name()),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    LossVector::for_grid(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_disjoint_exhaustive(shards: &[ClientShard], size: usize) {
        let mut seen = vec![false; size];
        for s in shards {
            for &i in &s.items {
                assert!(!seen[i], "item {i} assigned twice");
                seen[i] = true;
            }
        }
        assert!(seen.iter().all(|&x| x), "some item unassigned");
    }

    #[test]
    fn iid_examples() {
        let ds = SyntheticDataset::balanced(10, 2).unwrap();
        let shards = iid_partition(&ds, 2, 1).unwrap();
        assert_eq!(shards.iter().map(ClientShard::len).collect::<Vec<_>>(), vec![5, 5]);
        assert_disjoint_exhaustive(&shards, 10);

        let shards = iid_partition(&ds, 10, 1).unwrap();
        assert!(shards.iter().all(|s| s.len() == 1));
        assert!(iid_partition(&ds, 11, 1).is_err());
    }

    #[test]
    fn iid_sizes_differ_by_at_most_one() {
        let ds = SyntheticDataset::balanced(103, 3).unwrap();
        let shards = iid_partition(&ds, 10, 4).unwrap();
        let sizes: Vec<usize> = shards.iter().map(ClientShard::len).collect();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        assert_disjoint_exhaustive(&shards, 103);
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(&[0.5, 0.5], 3), vec![2, 1]);
        assert_eq!(largest_remainder(&[0.2, 0.3, 0.5], 10), vec![2, 3, 5]);
        assert_eq!(largest_remainder(&[1.0, 0.0, 0.0], 7), vec![7, 0, 0]);
        assert_eq!(largest_remainder(&[0.1, 0.1, 0.8], 0), vec![0, 0, 0]);
        let c = largest_remainder(&[0.333, 0.333, 0.334], 100);
        assert_eq!(c.iter().sum::<usize>(), 100);
    }

    #[test]
    fn huge_concentration_splits_evenly() {
        let ds = SyntheticDataset::balanced(1000, 10).unwrap();
        let spec = DirichletSpec::new(1e6, 2, 5).unwrap();
        let shards = dirichlet_partition(&ds, &spec).unwrap();
        assert_disjoint_exhaustive(&shards, 1000);
        for l in 0..10 {
            for s in &shards {
                let c = s.label_histogram[l] as i64;
                assert!((c - 50).abs() <= 1, "label {l}: {c}");
            }
        }
    }

    #[test]
    fn dirichlet_partition_is_exhaustive() {
        let ds = SyntheticDataset::balanced(5000, 10).unwrap();
        for &a in &[0.05, 0.5, 5.0, 30.0] {
            let shards = dirichlet_partition(&ds, &DirichletSpec::new(a, 37, 9).unwrap()).unwrap();
            assert_eq!(shards.len(), 37);
            assert_eq!(shards.iter().map(ClientShard::len).sum::<usize>(), 5000);
            assert_disjoint_exhaustive(&shards, 5000);
        }
    }

    #[test]
    fn dirichlet_spec_validation() {
        assert!(DirichletSpec::new(0.0, 3, 1).is_err());
        assert!(DirichletSpec::new(f64::INFINITY, 3, 1).is_err());
        assert!(DirichletSpec::new(1.0, 0, 1).is_err());
    }

    #[test]
    fn partitions_are_seed_deterministic() {
        let ds = SyntheticDataset::balanced(600, 4).unwrap();
        let spec = DirichletSpec::new(0.5, 12, 77).unwrap();
        assert_eq!(dirichlet_partition(&ds, &spec).unwrap(), dirichlet_partition(&ds, &spec).unwrap());
        assert_eq!(iid_partition(&ds, 12, 3).unwrap(), iid_partition(&ds, 12, 3).unwrap());
        assert_ne!(iid_partition(&ds, 12, 3).unwrap(), iid_partition(&ds, 12, 4).unwrap());
    }

    #[test]
    fn dataset_csv_import() {
        let data = "id,label\n10,0\n11,2\n12,1\n";
        let ds = SyntheticDataset::from_csv_reader(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.label_count(), 3);
        assert_eq!(ds.items()[1], DataItem { id: 11, label: 2 });
        let bad = "id,label\n1,x\n";
        let err = SyntheticDataset::from_csv_reader(bad.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
    }

    #[test]
    fn table_oracle_passthrough() {
        let oracle = TableOracle::from_rows(vec![vec![0.3, 0.1], vec![0.2, 0.9]]).unwrap();
        let grid = HyperparameterGrid::anonymous(2).unwrap();
        let lv = evaluate_losses(&oracle, &ClientShard::bare(0), &grid, 0).unwrap();
        assert_eq!(lv.values(), &[0.3, 0.1]);
        let err = evaluate_losses(&oracle, &ClientShard::bare(5), &grid, 0).unwrap_err();
        assert!(matches!(err, Error::OracleFailure { .. }));
    }

    #[test]
    fn table_oracle_csv() {
        let data = "client,lr=0.1,lr=0.01\n0,0.5,0.25\n1,inf,0.5\n";
        let oracle = TableOracle::from_csv_reader(data.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(oracle.candidate_names(), &["lr=0.1".to_string(), "lr=0.01".to_string()]);
        let grid = HyperparameterGrid::anonymous(2).unwrap();
        let err = evaluate_losses(&oracle, &ClientShard::bare(1), &grid, 0).unwrap_err();
        match err {
            Error::OracleFailure { candidate, .. } => assert_eq!(candidate, 0),
            other => panic!("unexpected {other:?}"),
        }
        let dup = "client,a\n0,1\n0,2\n";
        assert!(TableOracle::from_csv_reader(dup.as_bytes(), Path::new("mem")).is_err());
        let short = "client,a,b\n0,1\n";
        assert!(TableOracle::from_csv_reader(short.as_bytes(), Path::new("mem")).is_err());
    }

    #[test]
    fn degenerate_separated_oracle() {
        let oracle = SeparatedGaussianOracle::new([0, 2], 0.0).unwrap();
        let grid = HyperparameterGrid::anonymous(4).unwrap();
        let lv = evaluate_losses(&oracle, &ClientShard::bare(3), &grid, 11).unwrap();
        assert_eq!(lv.values(), &[0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn separated_oracle_means() {
        let oracle = SeparatedGaussianOracle::new([0], 0.2).unwrap();
        let grid = HyperparameterGrid::anonymous(3).unwrap();
        let draws = 5000;
        let mut sums = [0.0; 3];
        for seed in 0..draws {
            let lv = evaluate_losses(&oracle, &ClientShard::bare(0), &grid, seed).unwrap();
            for (s, v) in sums.iter_mut().zip(lv.values()) {
                *s += v;
            }
        }
        let expected = [0.0, 1.0, 1.0];
        for j in 0..3 {
            let mean = sums[j] / draws as f64;
            assert!((mean - expected[j]).abs() < 0.01, "candidate {j}: {mean}");
        }
    }

    #[test]
    fn separated_oracle_is_deterministic_and_client_specific() {
        let oracle = SeparatedGaussianOracle::new([1], 0.3).unwrap();
        let a = oracle.loss(&ClientShard::bare(0), 1, 5).unwrap();
        assert_eq!(a, oracle.loss(&ClientShard::bare(0), 1, 5).unwrap());
        assert_ne!(a, oracle.loss(&ClientShard::bare(1), 1, 5).unwrap());
    }

    #[test]
    fn modulation_widens_small_and_skewed_shards() {
        let ds = SyntheticDataset::balanced(400, 4).unwrap();
        let oracle = SeparatedGaussianOracle::new([0], 0.1)
            .unwrap()
            .with_modulation(ShardModulation { reference_size: 96.0 });
        let even = ClientShard::build(0, (0..96).collect(), &ds);
        let half = ClientShard::build(1, (0..24).collect(), &ds);
        let skewed = ClientShard::build(2, (0..96).map(|i| i * 4).collect(), &ds);
        assert!((oracle.effective_sigma(&even) - 0.1).abs() < 1e-12);
        assert!((oracle.effective_sigma(&half) - 0.2).abs() < 1e-12);
        assert!((oracle.effective_sigma(&skewed) - 0.2).abs() < 1e-12);
        assert_eq!(oracle.effective_sigma(&ClientShard::bare(3)), 0.1);
    }
}
