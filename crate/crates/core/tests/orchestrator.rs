use std::fs;
use std::path::Path;
use std::process::Command;

use hypervote::accountant::{calibrate_sigma, PrivacyBudget};
use hypervote::orchestrator::config::ExperimentConfig;
use hypervote::orchestrator::report::{to_csv_string, to_json, CSV_HEADER};
use hypervote::orchestrator::wire::{split_frame, HEADER_LEN, CONTRIBUTION_HEADER_LEN};
use hypervote::orchestrator::{
    emit_report, resolve, run_experiment, run_resolved, run_round, FailurePlan, MemoryTransport, MessageType,
    ReportFormat, RoundInput, SocketTransport, Transport,
};
use hypervote::partition::{ClientShard, TableOracle};
use hypervote::securesum::FixedPointCodec;
use hypervote::voting::HyperparameterGrid;
use hypervote::Error;
use statrs::distribution::{ContinuousCDF, Normal};

fn majority_table() -> (HyperparameterGrid, TableOracle, Vec<ClientShard>) {
    let oracle = TableOracle::from_rows(vec![vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    (HyperparameterGrid::anonymous(2).unwrap(), oracle, (0..3).map(ClientShard::bare).collect())
}

fn input<'a>(
    grid: &'a HyperparameterGrid,
    oracle: &'a TableOracle,
    shards: &'a [ClientShard],
    sigma: f64,
    seed: u64,
    failures: &'a FailurePlan,
) -> RoundInput<'a> {
    RoundInput {
        round_id: seed,
        grid,
        shards,
        oracle,
        sigma,
        k: 1,
        dropout_tolerance: 0.0,
        codec: FixedPointCodec::default(),
        seed,
        failures,
    }
}

#[test]
fn noiseless_majority_over_both_transports() {
    let (grid, oracle, shards) = majority_table();
    let none = FailurePlan::none();
    let transports: [&dyn Transport; 2] = [&MemoryTransport, &SocketTransport::default()];
    for t in transports {
        let out = run_round(&input(&grid, &oracle, &shards, 0.0, 4, &none), t).unwrap();
        assert_eq!(out.winner, 0, "{}", t.name());
    }
}

#[test]
fn low_budget_majority_rate_matches_normal_model() {
    // Aggregate (2, 1) plus independent N(0, sigma^2) per coordinate: the
    // first candidate wins with probability Phi(1 / (sigma sqrt 2)).
    let (grid, oracle, shards) = majority_table();
    let sigma = calibrate_sigma(PrivacyBudget::new(0.1, 1e-5).unwrap(), 1).unwrap().sigma;
    let expected = Normal::new(0.0, 1.0).unwrap().cdf(1.0 / (sigma * 2f64.sqrt()));
    let none = FailurePlan::none();
    let reps = 10_000;
    let wins = (0..reps)
        .filter(|&r| run_round(&input(&grid, &oracle, &shards, sigma, r, &none), &MemoryTransport).unwrap().winner == 0)
        .count();
    let rate = wins as f64 / reps as f64;
    let se = (expected * (1.0 - expected) / reps as f64).sqrt();
    assert!((rate - expected).abs() <= 3.0 * se, "rate {rate}, expected {expected} +- {}", 3.0 * se);
}

#[test]
fn transcript_shape_and_frame_sizes() {
    for (n, p) in [(3usize, 4usize), (9, 4), (5, 17)] {
        let rows = (0..n).map(|i| (0..p).map(|j| ((i + j) % 3) as f64).collect()).collect();
        let oracle = TableOracle::from_rows(rows).unwrap();
        let grid = HyperparameterGrid::anonymous(p).unwrap();
        let shards: Vec<ClientShard> = (0..n).map(ClientShard::bare).collect();
        let none = FailurePlan::none();
        let out = run_round(&input(&grid, &oracle, &shards, 3.0, 1, &none), &MemoryTransport).unwrap();
        let frames = &out.transcript.frames;
        assert_eq!(out.transcript.message_count(), n + 1);
        let kinds: Vec<MessageType> = frames.iter().map(|f| split_frame(f).unwrap().0).collect();
        assert_eq!(kinds.iter().filter(|k| **k == MessageType::Aggregate).count(), 1);
        assert_eq!(kinds.last(), Some(&MessageType::Aggregate));
        for f in &frames[..n] {
            // Linear in p and independent of n.
            assert_eq!(f.len(), HEADER_LEN + CONTRIBUTION_HEADER_LEN + 8 * p);
        }
    }
}

#[test]
fn aborted_attempt_leaves_no_aggregate() {
    let (grid, oracle, shards) = majority_table();
    let plan = FailurePlan {
        first_attempt: vec![1],
        second_attempt: vec![],
    };
    let out = run_round(&input(&grid, &oracle, &shards, 0.0, 2, &plan), &MemoryTransport).unwrap();
    let aborted = out.aborted.expect("first attempt aborts");
    assert!(aborted.decoded_aggregate.is_none());
    let kinds: Vec<MessageType> = aborted.frames.iter().map(|f| split_frame(f).unwrap().0).collect();
    assert_eq!(kinds, vec![MessageType::Contribution, MessageType::Contribution, MessageType::Abort]);
    assert_eq!(out.contributors, vec![0, 2]);
    assert_eq!(out.transcript.message_count(), 3);

    let twice = FailurePlan {
        first_attempt: vec![1],
        second_attempt: vec![2],
    };
    let err = run_round(&input(&grid, &oracle, &shards, 0.0, 2, &twice), &MemoryTransport).unwrap_err();
    assert!(matches!(err, Error::RoundFailure { .. }), "{err}");
}

fn small_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(20, 2, seed);
    cfg.grid = hypervote::orchestrator::GridSpec::Anonymous(12);
    cfg.epsilons = vec![0.5, f64::INFINITY];
    cfg.repetitions = 3;
    cfg.dropout_tolerance = 0.1;
    cfg.dropouts = 2;
    cfg
}

#[test]
fn experiment_transport_equivalence() {
    let cfg = small_config(11);
    let resolved = resolve(&cfg).unwrap();
    let a = run_resolved(&cfg, &resolved, &MemoryTransport).unwrap();
    let b = run_resolved(&cfg, &resolved, &SocketTransport::default()).unwrap();
    assert_eq!(to_csv_string(&a), to_csv_string(&b));
    assert!(a.records.iter().all(|r| r.rerun && r.aborted_hash.is_some()));
}

#[test]
fn record_counts_and_empty_sweep() {
    let mut cfg = small_config(3);
    cfg.epsilons = vec![0.5, 1.0];
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.records.len(), 6);
    assert_eq!(to_csv_string(&report).lines().count(), 7);

    cfg.repetitions = 0;
    let empty = run_experiment(&cfg).unwrap();
    assert_eq!(to_csv_string(&empty), format!("{}\n", CSV_HEADER.join(",")));
}

#[test]
fn non_private_noiseless_sweep_always_picks_opt() {
    let mut cfg = ExperimentConfig::new(15, 1, 5);
    cfg.epsilons = vec![f64::INFINITY];
    cfg.repetitions = 25;
    cfg.oracle = hypervote::orchestrator::OracleSpec::SeparatedGaussian {
        sigma_loss: 0.0,
        good: None,
        modulate: None,
    };
    let report = run_experiment(&cfg).unwrap();
    assert!(report.records.iter().all(|r| r.winner == r.opt && r.sigma == 0.0 && !r.private));
    assert_eq!(report.summary[0].opt_agreement, 1.0);
    assert!(!report.summary[0].private);
}

#[test]
fn json_report_schema() {
    let mut cfg = small_config(8);
    cfg.test_mode = true;
    let report = run_experiment(&cfg).unwrap();
    let v = to_json(&report);
    assert_eq!(v["schema_version"], 1);
    let records = v["records"].as_array().unwrap();
    assert_eq!(records.len(), 6);
    assert_eq!(records[5]["epsilon"], "inf");
    assert_eq!(records[5]["private"], false);
    assert_eq!(records[0]["plain_aggregate"].as_array().unwrap().len(), 12);
    assert!(records[0]["wall_clock_ms"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["summary"][1]["sigma"], 0.0);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_report(&report, ReportFormat::Json, &path).unwrap();
    let back: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(back["records"].as_array().unwrap().len(), 6);

    let missing = dir.path().join("no/such/dir/r.csv");
    match emit_report(&report, ReportFormat::Csv, &missing) {
        Err(Error::Io { path, .. }) => assert_eq!(path, missing),
        other => panic!("{other:?}"),
    }
}

#[test]
fn separated_success_dips_at_mid_good_count() {
    // k = 1: a large good set splits the votes among many good candidates,
    // while the noise stays fixed, until enough good candidates exist that
    // a random good one wins anyway.
    let rate = |good: usize| {
        let mut cfg = ExperimentConfig::new(250, 1, 31);
        cfg.epsilons = vec![0.25];
        cfg.repetitions = 150;
        cfg.oracle = hypervote::orchestrator::OracleSpec::SeparatedGaussian {
            sigma_loss: 0.2,
            good: Some(hypervote::orchestrator::config::GoodSpec::Leading(good)),
            modulate: None,
        };
        run_experiment(&cfg).unwrap().summary[0].success_rate
    };
    let (r4, r16, r64) = (rate(4), rate(16), rate(64));
    eprintln!("success at good counts 4, 16, 64: {r4} {r16} {r64}");
    assert!(r16 < r4 && r16 < r64, "4: {r4}, 16: {r16}, 64: {r64}");
}

fn cli() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hypervote"));
    c.env_remove("HYPERVOTE_SEED");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.conf", "n = 6\ngrid = anonymous\ngrid.size = 5\nrepetitions = 2\nepsilons = 1\n");
    assert_eq!(cli().arg("run").arg(&ok).output().unwrap().status.code(), Some(0));

    let bad = write(dir.path(), "bad.conf", "n = 6\nk = many\n");
    let out = cli().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let failing = write(
        dir.path(),
        "fail.conf",
        "n = 6\ngrid = anonymous\ngrid.size = 5\nrepetitions = 1\nepsilons = 1\ndropouts = 1\ndropouts.rerun = 1\n",
    );
    assert_eq!(cli().arg("run").arg(&failing).output().unwrap().status.code(), Some(3));
}

#[test]
fn env_seed_is_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let conf = write(dir.path(), "s.conf", "n = 6\ngrid = anonymous\ngrid.size = 5\nrepetitions = 2\nepsilons = 1\n");
    let run = |seed: &str| {
        let out = cli().env("HYPERVOTE_SEED", seed).arg("run").arg(&conf).output().unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(run("1"), run("1"));
    assert_ne!(run("1"), run("2"));
    let pinned = write(dir.path(), "p.conf", "n = 6\ngrid = anonymous\ngrid.size = 5\nrepetitions = 2\nepsilons = 1\nseed = 9\n");
    let a = cli().env("HYPERVOTE_SEED", "1").arg("run").arg(&pinned).output().unwrap().stdout;
    let b = cli().env("HYPERVOTE_SEED", "2").arg("run").arg(&pinned).output().unwrap().stdout;
    assert_eq!(a, b);
}
