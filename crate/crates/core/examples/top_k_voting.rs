//! Local top-k ballots, noise shares and winner selection without the
//! secure-sum layer.

use hypervote::sampling::{derive_seed, seeded};
use hypervote::voting::{
    add_client_noise, aggregate_noisy, aggregate_plain, n_effective, select_winner, top_k_votes, LossVector,
};
use hypervote::{calibrate_sigma, PrivacyBudget};

fn main() -> hypervote::Result<()> {
    // Five clients, six candidates. Candidate 2 is best for most clients.
    let losses = [
        [0.9, 0.7, 0.1, 0.5, 0.8, 0.6],
        [0.8, 0.6, 0.2, 0.1, 0.9, 0.7],
        [0.7, 0.9, 0.1, 0.3, 0.6, 0.8],
        [0.4, 0.8, 0.2, 0.6, 0.9, 0.3],
        [0.9, 0.5, 0.3, 0.2, 0.7, 0.8],
    ];
    let k = 2;
    let ballots = losses
        .iter()
        .map(|l| top_k_votes(&LossVector::new(l.to_vec())?, k))
        .collect::<hypervote::Result<Vec<_>>>()?;
    for (i, b) in ballots.iter().enumerate() {
        println!("client {i} votes {:?}", b.voted().collect::<Vec<_>>());
    }
    let plain = aggregate_plain(&ballots)?;
    println!("plain counts {:?}", plain.values);

    let sigma = calibrate_sigma(PrivacyBudget::new(1.0, 1e-5)?, k)?.sigma;
    let n_eff = n_effective(ballots.len(), 0.0)?;
    for trial in 0..3 {
        let noisy = ballots
            .iter()
            .enumerate()
            .map(|(i, b)| add_client_noise(b, sigma, n_eff, &mut seeded(derive_seed(7, &[trial, i as u64]))))
            .collect::<hypervote::Result<Vec<_>>>()?;
        let agg = aggregate_noisy(&noisy)?;
        println!("trial {trial}: sigma {sigma:.2}, winner {}", select_winner(&agg)?);
    }
    Ok(())
}
