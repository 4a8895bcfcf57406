//! Compares the success lower bound with a Monte-Carlo success rate.

use hypervote::utility::{simulate_success_rate, utility_lower_bound, SimulationConfig};
use hypervote::PrivacyBudget;

fn main() -> hypervote::Result<()> {
    let (p, good, n) = (100, 5, 250);
    for &eps in &[0.5, 1.0, 3.0] {
        for &k in &[1, 5] {
            let config = SimulationConfig::new(p, good, n, k, 0.2, PrivacyBudget::new(eps, 1e-5)?)
                .repetitions(500)
                .seed(11);
            let sim = simulate_success_rate(&config)?;
            let bound = utility_lower_bound(sim.mean_gamma, p - good, sim.sigma)?;
            let (lo, hi) = sim.wilson_95_interval;
            println!(
                "eps {eps:<4} k {k}: rate {:.3} [{lo:.3}, {hi:.3}], bound {}",
                sim.success_rate,
                bound.lower_bound().map_or("n/a".to_string(), |b| format!("{b:.3}")),
            );
        }
    }
    Ok(())
}
