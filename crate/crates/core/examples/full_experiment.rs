//! A small sweep over privacy budgets, printed as CSV.

use hypervote::orchestrator::report::to_csv_string;
use hypervote::orchestrator::{run_experiment, ExperimentConfig};

fn main() -> hypervote::Result<()> {
    let mut config = ExperimentConfig::new(40, 2, 2024);
    config.epsilons = vec![0.5, 1.0, f64::INFINITY];
    config.repetitions = 10;
    let report = run_experiment(&config)?;
    for s in &report.summary {
        eprintln!(
            "eps {}: {}/{} successes, random guess {:.3}",
            s.epsilon, s.successes, s.repetitions, s.rand_guess
        );
    }
    print!("{}", to_csv_string(&report));
    Ok(())
}
