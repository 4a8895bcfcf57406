//! CSV and JSON serialisation of run reports.
//!
//! CSV columns, in this order:
//!
//! | column            | content                                             |
//! |-------------------|-----------------------------------------------------|
//! | `epsilon`         | budget, `inf` for the non-private row               |
//! | `rep`             | repetition index                                    |
//! | `winner`          | selected candidate index                            |
//! | `gamma`           | vote gap, `NA` when every candidate is good         |
//! | `bound`           | clamped success lower bound, `NA` when gap <= 0     |
//! | `success`         | `1` when the winner is a good candidate, else `0`   |
//! | `seed`            | the round's derived seed                            |
//! | `transcript_hash` | hex SHA-256 of the closing attempt's frames         |
//!
//! The CSV carries no timings, so identical seeds give identical bytes.
//! The JSON document has `schema_version` [`SCHEMA_VERSION`] and adds the
//! per-round wall clock, noise scale, privacy flag and, in test mode, the
//! plain aggregate.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{json, Value};

use super::experiment::{RunRecord, RunReport};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 8] = [
    "epsilon",
    "rep",
    "winner",
    "gamma",
    "bound",
    "success",
    "seed",
    "transcript_hash",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format `{other}` (expected csv or json)")),
        }
    }
}

/// Shortest round-trip decimal, `inf` for infinity.
pub fn format_float(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x}")
    }
}

fn opt_float(x: Option<f64>) -> String {
    x.map(format_float).unwrap_or_else(|| "NA".into())
}

fn csv_row(r: &RunRecord) -> [String; 8] {
    [
        format_float(r.epsilon),
        r.rep.to_string(),
        r.winner.to_string(),
        opt_float(r.gamma),
        opt_float(r.bound),
        (r.success as u8).to_string(),
        r.seed.to_string(),
        r.transcript_hash.clone(),
    ]
}

pub fn write_csv<W: Write>(report: &RunReport, writer: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in &report.records {
        w.write_record(csv_row(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(report: &RunReport) -> String {
    let mut buf = Vec::new();
    write_csv(report, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is utf-8")
}

/// JSON numbers cannot hold infinity, so epsilons are strings when infinite.
fn json_epsilon(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format_float(x))
    }
}

pub fn to_json(report: &RunReport) -> Value {
    let records: Vec<Value> = report
        .records
        .iter()
        .map(|r| {
            let mut v = json!({
                "epsilon": json_epsilon(r.epsilon),
                "rep": r.rep,
                "seed": r.seed,
                "winner": r.winner,
                "opt": r.opt,
                "gamma": r.gamma,
                "bound": r.bound,
                "success": r.success,
                "sigma": r.sigma,
                "private": r.private,
                "contributors": r.contributors,
                "n_effective": r.n_effective,
                "rerun": r.rerun,
                "clamped": r.clamped,
                "transcript_hash": r.transcript_hash,
                "aborted_transcript_hash": r.aborted_hash,
                "wall_clock_ms": r.wall_clock_ms,
            });
            if let Some(plain) = &r.plain_aggregate {
                v["plain_aggregate"] = json!(plain);
            }
            v
        })
        .collect();
    let summary: Vec<Value> = report
        .summary
        .iter()
        .map(|s| {
            json!({
                "epsilon": json_epsilon(s.epsilon),
                "private": s.private,
                "sigma": s.calibration.sigma,
                "alpha_star": s.calibration.alpha_star.is_finite().then_some(s.calibration.alpha_star),
                "repetitions": s.repetitions,
                "successes": s.successes,
                "success_rate": s.success_rate.is_finite().then_some(s.success_rate),
                "wilson_95": [s.wilson_95.0, s.wilson_95.1],
                "opt_agreement": s.opt_agreement.is_finite().then_some(s.opt_agreement),
                "rand_guess": s.rand_guess,
            })
        })
        .collect();
    json!({
        "schema_version": SCHEMA_VERSION,
        "p": report.p,
        "n": report.n,
        "k": report.k,
        "delta": report.delta,
        "seed": report.seed,
        "transport": report.transport.as_str(),
        "oracle": report.oracle,
        "excluded_empty_shards": report.excluded_empty,
        "test_mode": report.test_mode,
        "records": records,
        "summary": summary,
    })
}

pub fn emit_report(report: &RunReport, format: ReportFormat, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    match format {
        ReportFormat::Csv => write_csv(report, &mut out).map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?,
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut out, &to_json(report))
                .map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}
