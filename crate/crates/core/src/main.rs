use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hypervote::orchestrator::config::parse_epsilon;
use hypervote::orchestrator::report::{format_float, to_csv_string, to_json};
use hypervote::orchestrator::{emit_report, run_experiment, ExperimentConfig, ReportFormat};
use hypervote::utility::{simulate_success_rate, utility_lower_bound, BoundOutcome, SimulationConfig};
use hypervote::{calibrate_sigma, Error, PrivacyBudget};

#[derive(Parser)]
#[command(name = "hypervote", version, about = "Private top-k voting for distributed hyperparameter selection")]
struct Cli {
    /// Default seed for commands and configs that do not set one.
    #[arg(long, global = true, env = "HYPERVOTE_SEED", default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Noise scale for each epsilon.
    Calibrate {
        #[arg(long, value_delimiter = ',', value_parser = parse_epsilon,
              default_value = "0.1,0.25,0.5,1,3,inf")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
    /// Monte-Carlo success rates on synthetic separated losses.
    Simulate {
        #[arg(long, default_value_t = 100)]
        p: usize,
        #[arg(long, default_value_t = 250)]
        n: usize,
        #[arg(long, default_value_t = 5)]
        good: usize,
        #[arg(long, default_value_t = 0.2)]
        sigma_loss: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50,100")]
        ks: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_epsilon, default_value = "0.25,1")]
        epsilons: Vec<f64>,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long, default_value_t = 5000)]
        repetitions: usize,
    },
    /// Full protocol sweep from a config file.
    Run {
        config: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
    },
    /// Success lower bound for a gap, bad-set size and noise scale.
    Bound {
        #[arg(long, allow_hyphen_values = true)]
        gamma: f64,
        #[arg(long)]
        h_bad: usize,
        #[arg(long)]
        sigma: f64,
    },
}

fn budget(eps: f64, delta: f64) -> hypervote::Result<PrivacyBudget> {
    if eps.is_infinite() {
        PrivacyBudget::non_private(delta)
    } else {
        PrivacyBudget::new(eps, delta)
    }
}

fn execute(cli: Cli) -> hypervote::Result<()> {
    let out = |s: String| writeln!(io::stdout(), "{s}").map_err(|e| Error::io("<stdout>", e));
    match cli.command {
        Command::Calibrate { epsilons, delta, k } => {
            out("epsilon,sigma,alpha_star,eps_achieved".into())?;
            for eps in epsilons {
                let c = calibrate_sigma(budget(eps, delta)?, k)?;
                out(format!(
                    "{},{:.6},{},{}",
                    format_float(eps),
                    c.sigma,
                    format_float(c.alpha_star),
                    format_float(c.eps_achieved)
                ))?;
            }
        }
        Command::Simulate {
            p,
            n,
            good,
            sigma_loss,
            ks,
            epsilons,
            delta,
            repetitions,
        } => {
            out("k,epsilon,success_rate,wilson_lo,wilson_hi,sigma,mean_gamma".into())?;
            for &k in &ks {
                for &eps in &epsilons {
                    let cfg = SimulationConfig::new(p, good, n, k, sigma_loss, budget(eps, delta)?)
                        .repetitions(repetitions)
                        .seed(cli.seed);
                    let r = simulate_success_rate(&cfg)?;
                    out(format!(
                        "{k},{},{},{},{},{:.6},{}",
                        format_float(eps),
                        r.success_rate,
                        r.wilson_95_interval.0,
                        r.wilson_95_interval.1,
                        r.sigma,
                        r.mean_gamma
                    ))?;
                }
            }
        }
        Command::Run { config, out: path, format } => {
            let cfg = ExperimentConfig::from_file(&config, cli.seed)?;
            let report = run_experiment(&cfg)?;
            match path {
                Some(path) => emit_report(&report, format, &path)?,
                None => match format {
                    ReportFormat::Csv => write!(io::stdout(), "{}", to_csv_string(&report)),
                    ReportFormat::Json => writeln!(io::stdout(), "{:#}", to_json(&report)),
                }
                .map_err(|e| Error::io("<stdout>", e))?,
            }
        }
        Command::Bound { gamma, h_bad, sigma } => match utility_lower_bound(gamma, h_bad, sigma)? {
            BoundOutcome::Bound(b) => out(format!(
                "lower_bound={} raw={} failure_mass={:.6e}",
                b.lower_bound(),
                b.raw,
                b.failure_mass
            ))?,
            BoundOutcome::NotApplicable { gamma } => out(format!("not applicable: gap {gamma} <= 0"))?,
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } | Error::InvalidParameter(_) | Error::Csv { .. } => 2,
                Error::RoundFailure { .. } => 3,
                _ => 1,
            })
        }
    }
}
