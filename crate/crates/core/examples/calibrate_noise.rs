//! Calibrates the aggregate noise scale for a few budgets and vote counts.

use hypervote::{calibrate_sigma, dp_epsilon_of_sigma, l2_sensitivity, PrivacyBudget};

fn main() -> hypervote::Result<()> {
    let delta = 1e-5;
    println!("{:>6} {:>4} {:>12} {:>10} {:>12}", "eps", "k", "sigma", "alpha*", "achieved");
    for &k in &[1, 5, 10] {
        for &eps in &[0.1, 0.5, 1.0, 3.0] {
            let c = calibrate_sigma(PrivacyBudget::new(eps, delta)?, k)?;
            println!("{eps:>6} {k:>4} {:>12.4} {:>10.3} {:>12.6}", c.sigma, c.alpha_star, c.eps_achieved);
        }
    }

    // Going the other way: what a fixed noise scale buys.
    let (eps, alpha) = dp_epsilon_of_sigma(20.0, 1, delta)?;
    println!("\nsigma = 20, k = 1, sensitivity {:.4}: eps = {eps:.4} at alpha = {alpha:.2}", l2_sensitivity(1)?);
    Ok(())
}
