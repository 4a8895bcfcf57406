//! Experiment configuration and its line-oriented text format.
//!
//! One `key = value` pair per line. `#` starts a comment. Blank lines are
//! ignored. Keys other than `grid.param` and `grid.candidate` may appear at
//! most once. Relative paths resolve against the config file's directory.
//!
//! | key                | value                                             | default                  |
//! |--------------------|---------------------------------------------------|--------------------------|
//! | `grid`             | `demo`, `anonymous`                               | `demo`, or table header  |
//! | `grid.size`        | candidate count for `grid = anonymous`            |                          |
//! | `grid.param`       | `name: v1, v2, ...` (repeatable, cross product)   |                          |
//! | `grid.candidate`   | `name=v, name=v, ...` (repeatable, explicit list) |                          |
//! | `partition`        | `iid`, `dirichlet`                                | `iid`                    |
//! | `partition.alpha`  | Dirichlet concentration                           | required for `dirichlet` |
//! | `dataset.items`    | synthetic dataset size                            | `20 * n`                 |
//! | `dataset.labels`   | synthetic label count                             | `10`                     |
//! | `dataset.file`     | CSV with header `id,label`                        |                          |
//! | `oracle`           | `separated-gaussian`, `table`                     | `separated-gaussian`     |
//! | `oracle.sigma_loss`| loss spread of the separated oracle               | `0.2`                    |
//! | `oracle.good`      | good candidate indices, comma separated           |                          |
//! | `oracle.good_count`| leading good candidates                           | `min(5, p)`              |
//! | `oracle.modulate`  | reference shard size for loss-spread modulation   | off                      |
//! | `oracle.table`     | CSV loss table `client,<names...>`                | required for `table`     |
//! | `n`                | client count                                      | table row count          |
//! | `k`                | votes per client                                  | `1`                      |
//! | `epsilons`         | comma-separated list, `inf` allowed               | `0.1, 0.25, 0.5, 1, 3, inf` |
//! | `delta`            | DP delta                                          | `1e-5`                   |
//! | `dropout_tolerance`| fraction xi in `[0, 1)`                           | `0`                      |
//! | `dropouts`         | clients crashing in each round's first attempt    | `0`                      |
//! | `dropouts.rerun`   | further clients crashing in the re-run            | `0`                      |
//! | `repetitions`      | rounds per epsilon                                | `20`                     |
//! | `seed`             | decimal or `0x` hex                               | caller supplied          |
//! | `transport`        | `memory`, `socket`                                | `memory`                 |
//! | `empty_shards`     | `exclude`, `prior`                                | `exclude`                |
//! | `test_mode`        | `true` records plain aggregates in JSON reports   | `false`                  |
//! | `fractional_bits`  | fixed-point precision                             | `20`                     |

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::transport::TransportKind;
use crate::error::{Error, Result};
use crate::securesum::DEFAULT_FRACTIONAL_BITS;
use crate::voting::Candidate;

pub const DEFAULT_EPSILONS: [f64; 6] = [0.1, 0.25, 0.5, 1.0, 3.0, f64::INFINITY];
pub const DEFAULT_DELTA: f64 = 1e-5;
pub const DEFAULT_REPETITIONS: usize = 20;
pub const DEFAULT_GOOD_COUNT: usize = 5;
pub const DEFAULT_SIGMA_LOSS: f64 = 0.2;
pub const DEFAULT_LABELS: usize = 10;
pub const DEFAULT_ITEMS_PER_CLIENT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    /// The 10 x 5 x 2 SGD grid.
    Demo,
    Anonymous(usize),
    CrossProduct(Vec<(String, Vec<String>)>),
    Explicit(Vec<Candidate>),
    /// Candidates named by the loss table header.
    FromTable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionSpec {
    Iid,
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    Balanced { items: usize, labels: usize },
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoodSpec {
    Leading(usize),
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    SeparatedGaussian {
        sigma_loss: f64,
        /// `None` takes the first `min(5, p)` candidates.
        good: Option<GoodSpec>,
        modulate: Option<f64>,
    },
    Table {
        path: PathBuf,
        good: Option<Vec<usize>>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EmptyShardPolicy {
    /// Drop clients with no data before the round.
    #[default]
    Exclude,
    /// Keep them; the oracle evaluates an empty shard at its default spread.
    Prior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: GridSpec,
    pub partition: PartitionSpec,
    pub dataset: DatasetSpec,
    pub oracle: OracleSpec,
    /// `None` for table oracles, which take the client count from the table.
    pub n: Option<usize>,
    pub k: usize,
    pub epsilons: Vec<f64>,
    pub delta: f64,
    pub dropout_tolerance: f64,
    pub dropouts: usize,
    /// Fault injection: survivors that also crash during the re-run.
    pub rerun_dropouts: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub transport: TransportKind,
    pub empty_shards: EmptyShardPolicy,
    pub test_mode: bool,
    pub fractional_bits: u32,
}

impl ExperimentConfig {
    /// Separated-oracle sweep over the demo grid with every other setting
    /// at its default.
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self {
            grid: GridSpec::Demo,
            partition: PartitionSpec::Iid,
            dataset: DatasetSpec::Balanced {
                items: DEFAULT_ITEMS_PER_CLIENT * n,
                labels: DEFAULT_LABELS,
            },
            oracle: OracleSpec::SeparatedGaussian {
                sigma_loss: DEFAULT_SIGMA_LOSS,
                good: None,
                modulate: None,
            },
            n: Some(n),
            k,
            epsilons: DEFAULT_EPSILONS.to_vec(),
            delta: DEFAULT_DELTA,
            dropout_tolerance: 0.0,
            dropouts: 0,
            rerun_dropouts: 0,
            repetitions: DEFAULT_REPETITIONS,
            seed,
            transport: TransportKind::Memory,
            empty_shards: EmptyShardPolicy::Exclude,
            test_mode: false,
            fractional_bits: DEFAULT_FRACTIONAL_BITS,
        }
    }

    pub fn from_file(path: &Path, default_seed: u64) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base, default_seed)
    }

    pub fn parse(text: &str, base_dir: &Path, default_seed: u64) -> Result<Self> {
        let entries = Entries::read(text)?;
        entries.build(base_dir, default_seed)
    }
}

fn config_err(line: usize, field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

const REPEATABLE: [&str; 2] = ["grid.param", "grid.candidate"];
const KNOWN: [&str; 28] = [
    "grid",
    "grid.size",
    "grid.param",
    "grid.candidate",
    "partition",
    "partition.alpha",
    "dataset.items",
    "dataset.labels",
    "dataset.file",
    "oracle",
    "oracle.sigma_loss",
    "oracle.good",
    "oracle.good_count",
    "oracle.modulate",
    "oracle.table",
    "n",
    "k",
    "epsilons",
    "delta",
    "dropout_tolerance",
    "dropouts",
    "dropouts.rerun",
    "repetitions",
    "seed",
    "transport",
    "empty_shards",
    "test_mode",
    "fractional_bits",
];

struct Entry {
    line: usize,
    value: String,
}

struct Entries {
    single: BTreeMap<String, Entry>,
    repeated: BTreeMap<String, Vec<Entry>>,
}

impl Entries {
    fn read(text: &str) -> Result<Self> {
        let mut single = BTreeMap::new();
        let mut repeated: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| config_err(line, content, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim().to_string();
            if !KNOWN.contains(&key) {
                return Err(config_err(line, key, "unknown key"));
            }
            if REPEATABLE.contains(&key) {
                repeated.entry(key.to_string()).or_default().push(Entry { line, value });
            } else if let Some(prev) = single.insert(key.to_string(), Entry { line, value }) {
                return Err(config_err(line, key, format!("duplicate key, first set on line {}", prev.line)));
            }
        }
        Ok(Self { single, repeated })
    }

    fn get(&self, key: &str) -> Option<&Entry> {
        self.single.get(key)
    }

    fn parsed<T>(&self, key: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
        self.get(key)
            .map(|e| parse(&e.value).map_err(|m| config_err(e.line, key, m)))
            .transpose()
    }

    fn line(&self, key: &str) -> usize {
        self.get(key).map(|e| e.line).unwrap_or(0)
    }

    fn build(&self, base_dir: &Path, default_seed: u64) -> Result<ExperimentConfig> {
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base_dir.join(p)
            }
        };

        let oracle_kind = self.parsed("oracle", |v| match v {
            "separated-gaussian" | "table" => Ok(v.to_string()),
            other => Err(format!("unknown oracle `{other}`")),
        })?;
        let is_table = oracle_kind.as_deref() == Some("table");

        let good_indices = self.parsed("oracle.good", parse_usize_list)?;
        let good_count = self.parsed("oracle.good_count", parse_usize)?;
        if good_indices.is_some() && good_count.is_some() {
            return Err(config_err(
                self.line("oracle.good_count"),
                "oracle.good_count",
                "conflicts with oracle.good",
            ));
        }
        let oracle = if is_table {
            for key in ["oracle.sigma_loss", "oracle.good_count", "oracle.modulate"] {
                if self.get(key).is_some() {
                    return Err(config_err(self.line(key), key, "not used by the table oracle"));
                }
            }
            let path = self
                .get("oracle.table")
                .ok_or_else(|| config_err(self.line("oracle"), "oracle.table", "required for the table oracle"))?;
            OracleSpec::Table {
                path: resolve(&path.value),
                good: good_indices,
            }
        } else {
            if let Some(e) = self.get("oracle.table") {
                return Err(config_err(e.line, "oracle.table", "only used by the table oracle"));
            }
            let sigma_loss = self.parsed("oracle.sigma_loss", parse_nonneg)?.unwrap_or(DEFAULT_SIGMA_LOSS);
            let modulate = self.parsed("oracle.modulate", parse_positive)?;
            let good = match (good_indices, good_count) {
                (Some(idx), _) => Some(GoodSpec::Indices(idx)),
                (None, Some(c)) => Some(GoodSpec::Leading(c)),
                (None, None) => None,
            };
            OracleSpec::SeparatedGaussian {
                sigma_loss,
                good,
                modulate,
            }
        };

        let grid = self.grid(is_table)?;

        let n = self.parsed("n", parse_usize)?;
        if !is_table && n.is_none() {
            return Err(config_err(0, "n", "client count is required"));
        }
        if n == Some(0) {
            return Err(config_err(self.line("n"), "n", "must be positive"));
        }

        let partition = match self.parsed("partition", |v| match v {
            "iid" | "dirichlet" => Ok(v.to_string()),
            other => Err(format!("unknown partition `{other}` (expected iid or dirichlet)")),
        })?
        .as_deref()
        {
            Some("dirichlet") => PartitionSpec::Dirichlet {
                alpha: self.parsed("partition.alpha", parse_positive)?.ok_or_else(|| {
                    config_err(self.line("partition"), "partition.alpha", "required for dirichlet")
                })?,
            },
            _ => {
                if let Some(e) = self.get("partition.alpha") {
                    return Err(config_err(e.line, "partition.alpha", "only used by dirichlet"));
                }
                PartitionSpec::Iid
            }
        };

        let dataset = match self.get("dataset.file") {
            Some(e) => {
                for key in ["dataset.items", "dataset.labels"] {
                    if self.get(key).is_some() {
                        return Err(config_err(self.line(key), key, "conflicts with dataset.file"));
                    }
                }
                DatasetSpec::File(resolve(&e.value))
            }
            None => DatasetSpec::Balanced {
                items: self
                    .parsed("dataset.items", parse_usize)?
                    .unwrap_or(DEFAULT_ITEMS_PER_CLIENT * n.unwrap_or(1)),
                labels: self.parsed("dataset.labels", parse_usize)?.unwrap_or(DEFAULT_LABELS),
            },
        };

        let k = self.parsed("k", parse_usize)?.unwrap_or(1);
        if k == 0 {
            return Err(config_err(self.line("k"), "k", "must be at least 1"));
        }
        let epsilons = self
            .parsed("epsilons", parse_epsilons)?
            .unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());
        let delta = self
            .parsed("delta", |v| {
                let d = parse_f64(v)?;
                if d > 0.0 && d < 1.0 {
                    Ok(d)
                } else {
                    Err(format!("must lie in (0, 1), got {d}"))
                }
            })?
            .unwrap_or(DEFAULT_DELTA);
        let dropout_tolerance = self
            .parsed("dropout_tolerance", |v| {
                let x = parse_f64(v)?;
                if (0.0..1.0).contains(&x) {
                    Ok(x)
                } else {
                    Err(format!("must lie in [0, 1), got {x}"))
                }
            })?
            .unwrap_or(0.0);
        let dropouts = self.parsed("dropouts", parse_usize)?.unwrap_or(0);
        let rerun_dropouts = self.parsed("dropouts.rerun", parse_usize)?.unwrap_or(0);
        if let Some(n) = n {
            if dropouts >= n {
                return Err(config_err(self.line("dropouts"), "dropouts", "must be below the client count"));
            }
            if dropouts + rerun_dropouts > n {
                return Err(config_err(
                    self.line("dropouts.rerun"),
                    "dropouts.rerun",
                    "more crashes than clients",
                ));
            }
        }

        Ok(ExperimentConfig {
            grid,
            partition,
            dataset,
            oracle,
            n,
            k,
            epsilons,
            delta,
            dropout_tolerance,
            dropouts,
            rerun_dropouts,
            repetitions: self.parsed("repetitions", parse_usize)?.unwrap_or(DEFAULT_REPETITIONS),
            seed: self.parsed("seed", parse_seed)?.unwrap_or(default_seed),
            transport: self.parsed("transport", |v| v.parse())?.unwrap_or_default(),
            empty_shards: self
                .parsed("empty_shards", |v| match v {
                    "exclude" => Ok(EmptyShardPolicy::Exclude),
                    "prior" => Ok(EmptyShardPolicy::Prior),
                    other => Err(format!("unknown policy `{other}` (expected exclude or prior)")),
                })?
                .unwrap_or_default(),
            test_mode: self.parsed("test_mode", parse_bool)?.unwrap_or(false),
            fractional_bits: self
                .parsed("fractional_bits", |v| v.parse::<u32>().map_err(|e| e.to_string()))?
                .unwrap_or(DEFAULT_FRACTIONAL_BITS),
        })
    }

    fn grid(&self, is_table: bool) -> Result<GridSpec> {
        let params = self.repeated.get("grid.param");
        let candidates = self.repeated.get("grid.candidate");
        let kind = self.get("grid");
        let size = self.parsed("grid.size", parse_usize)?;
        let size_unused = || config_err(self.line("grid.size"), "grid.size", "only used by an anonymous grid");
        if let (Some(_), Some(c)) = (params, candidates) {
            return Err(config_err(c[0].line, "grid.candidate", "conflicts with grid.param"));
        }
        if params.or(candidates).is_some() {
            if let Some(k) = kind {
                return Err(config_err(k.line, "grid", "conflicts with grid.param and grid.candidate"));
            }
            if size.is_some() {
                return Err(size_unused());
            }
        }
        if let Some(entries) = params {
            let mut axes: Vec<(String, Vec<String>)> = Vec::new();
            for e in entries {
                let (name, values) = e
                    .value
                    .split_once(':')
                    .ok_or_else(|| config_err(e.line, "grid.param", "expected `name: v1, v2, ...`"))?;
                let name = name.trim().to_string();
                let values = split_list(values);
                if name.is_empty() || values.is_empty() {
                    return Err(config_err(e.line, "grid.param", "needs a name and at least one value"));
                }
                if axes.iter().any(|(n, _)| *n == name) {
                    return Err(config_err(e.line, "grid.param", format!("parameter `{name}` repeated")));
                }
                axes.push((name, values));
            }
            return Ok(GridSpec::CrossProduct(axes));
        }
        if let Some(entries) = candidates {
            let mut list = Vec::new();
            for e in entries {
                let params = split_list(&e.value)
                    .into_iter()
                    .map(|pair| {
                        pair.split_once('=')
                            .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
                            .ok_or_else(|| config_err(e.line, "grid.candidate", "expected `name=value, ...`"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                if params.is_empty() {
                    return Err(config_err(e.line, "grid.candidate", "empty candidate"));
                }
                list.push(Candidate::new(params));
            }
            return Ok(GridSpec::Explicit(list));
        }
        match kind {
            None if size.is_some() => Err(size_unused()),
            None if is_table => Ok(GridSpec::FromTable),
            None => Ok(GridSpec::Demo),
            Some(e) => match e.value.as_str() {
                "demo" if size.is_some() => Err(size_unused()),
                "demo" => Ok(GridSpec::Demo),
                "anonymous" => match size {
                    Some(0) => Err(config_err(self.line("grid.size"), "grid.size", "must be positive")),
                    Some(p) => Ok(GridSpec::Anonymous(p)),
                    None => Err(config_err(e.line, "grid.size", "required for an anonymous grid")),
                },
                other => Err(config_err(
                    e.line,
                    "grid",
                    format!("unknown grid `{other}` (expected demo or anonymous)"),
                )),
            },
        }
    }
}

fn split_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_usize(v: &str) -> std::result::Result<usize, String> {
    v.parse().map_err(|_| format!("expected a non-negative integer, got `{v}`"))
}

fn parse_usize_list(v: &str) -> std::result::Result<Vec<usize>, String> {
    let items = split_list(v);
    if items.is_empty() {
        return Err("expected at least one index".into());
    }
    items.iter().map(|s| parse_usize(s)).collect()
}

fn parse_f64(v: &str) -> std::result::Result<f64, String> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| format!("expected a finite number, got `{v}`"))
}

fn parse_nonneg(v: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(v)?;
    if x >= 0.0 {
        Ok(x)
    } else {
        Err(format!("must be >= 0, got {x}"))
    }
}

fn parse_positive(v: &str) -> std::result::Result<f64, String> {
    let x = parse_f64(v)?;
    if x > 0.0 {
        Ok(x)
    } else {
        Err(format!("must be > 0, got {x}"))
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got `{other}`")),
    }
}

fn parse_seed(v: &str) -> std::result::Result<u64, String> {
    let parsed = match v.strip_prefix("0x").or_else(|| v.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => v.parse(),
    };
    parsed.map_err(|_| format!("expected a 64-bit seed, got `{v}`"))
}

/// Parses one epsilon: a positive number, or `inf` for no privacy.
pub fn parse_epsilon(v: &str) -> std::result::Result<f64, String> {
    match v.trim() {
        "inf" | "infinity" | "∞" => Ok(f64::INFINITY),
        other => parse_positive(other),
    }
}

fn parse_epsilons(v: &str) -> std::result::Result<Vec<f64>, String> {
    split_list(v).iter().map(|s| parse_epsilon(s)).collect()
}
