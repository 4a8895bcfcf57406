use hypervote::sampling::{seeded, Gaussian};
use hypervote::utility::{gap, utility_lower_bound, GoodBadPartition};
use hypervote::voting::argmax;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn failure_mass_dominates_the_normal_tail() {
    // Each bad-vs-good comparison fails with probability Q(gamma / (sigma sqrt 2)).
    // The bound's per-candidate term must cover that tail.
    let std = Normal::new(0.0, 1.0).unwrap();
    for &gamma in &[0.5, 1.0, 5.0, 20.0, 50.0] {
        for &sigma in &[0.5, 2.0, 10.0, 40.0] {
            let tail = 1.0 - std.cdf(gamma / (sigma * 2f64.sqrt()));
            let b = utility_lower_bound(gamma, 1, sigma).unwrap();
            let mass = b.bound().unwrap().failure_mass;
            assert!(mass >= tail, "gamma {gamma} sigma {sigma}: {mass} < {tail}");
        }
    }
}

#[test]
fn pairwise_noise_difference_has_the_normal_tail() {
    // z_i - z_j for independent N(0, sigma^2) draws is N(0, 2 sigma^2).
    let trials = 200_000;
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut rng = seeded(0x7A11);
    let mut g = Gaussian::new();
    for &(gamma, sigma) in &[(1.0, 1.0), (3.0, 2.0), (4.0, 1.5), (10.0, 8.0)] {
        let hits = (0..trials)
            .filter(|_| sigma * (g.sample(&mut rng) - g.sample(&mut rng)) >= gamma)
            .count();
        let empirical = hits as f64 / trials as f64;
        let expected = 1.0 - std.cdf(gamma / (sigma * 2f64.sqrt()));
        let se = (expected * (1.0 - expected) / trials as f64).sqrt();
        assert!((empirical - expected).abs() < 4.0 * se, "gamma {gamma} sigma {sigma}: {empirical} vs {expected}");
    }
}

fn success_rate(plain: &[f64], partition: &GoodBadPartition, sigma: f64, draws: usize, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut g = Gaussian::new();
    let mut noisy = vec![0.0; plain.len()];
    let wins = (0..draws)
        .filter(|_| {
            for (x, v) in noisy.iter_mut().zip(plain) {
                *x = v + sigma * g.sample(&mut rng);
            }
            partition.is_good(argmax(&noisy).unwrap())
        })
        .count();
    wins as f64 / draws as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bound_holds_for_arbitrary_vote_profiles(
        good in prop::collection::vec(5.0f64..40.0, 1..5),
        bad in prop::collection::vec(0.0f64..5.0, 1..30),
        sigma in 1.0f64..10.0,
        seed in any::<u64>(),
    ) {
        let plain: Vec<f64> = good.iter().chain(&bad).copied().collect();
        let partition = GoodBadPartition::leading(good.len(), plain.len()).unwrap();
        let gamma = gap(&plain, &partition).unwrap();
        prop_assume!(gamma > 0.0);
        let bound = utility_lower_bound(gamma, bad.len(), sigma).unwrap().lower_bound().unwrap();
        let draws = 4000;
        let rate = success_rate(&plain, &partition, sigma, draws, seed);
        let se = (bound * (1.0 - bound) / draws as f64).sqrt();
        prop_assert!(rate >= bound - 4.0 * se, "rate {rate} bound {bound}");
    }

    #[test]
    fn relabelling_bad_candidates_keeps_gap_and_bound(
        votes in prop::collection::vec(0u32..50, 4..20),
        seed in any::<u64>(),
    ) {
        let plain: Vec<f64> = votes.iter().map(|&v| v as f64).collect();
        let partition = GoodBadPartition::leading(2, plain.len()).unwrap();
        let mut permuted = plain.clone();
        let mut rng = seeded(seed);
        hypervote::sampling::shuffle(&mut permuted[2..], &mut rng);
        let a = gap(&plain, &partition).unwrap();
        let b = gap(&permuted, &partition).unwrap();
        prop_assert_eq!(a, b);
        prop_assert_eq!(
            utility_lower_bound(a, plain.len() - 2, 3.0).unwrap(),
            utility_lower_bound(b, plain.len() - 2, 3.0).unwrap()
        );
    }
}
