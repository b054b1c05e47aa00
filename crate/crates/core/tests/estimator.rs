use perp_core::estimator::{d_hat, delta_recursion, estimate_model, estimate_reference, EpisodeDataset};
use perp_core::instances::{figure1_m, random_deterministic_policy, random_mdp};
use perp_core::mdp::{forward_visitations, performance_difference, value_functions};
use perp_core::sim::Simulator;
use perp_core::Policy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn true_inputs_reproduce_value_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..100 {
        let (s, a, h) = (
            rng.random_range(1..=6),
            rng.random_range(1..=4),
            rng.random_range(1..=5),
        );
        let mdp = random_mdp(&mut rng, s, a, h).unwrap();
        let pi: Policy = random_deterministic_policy(&mut rng, s, a, h);
        let bar: Policy = random_deterministic_policy(&mut rng, s, a, h);
        let w_ref = forward_visitations(&mdp, &bar).unwrap().w[..h].to_vec();
        let delta = delta_recursion(&mdp, &pi, &bar, &w_ref, None).unwrap();
        let d = d_hat(&mdp, &pi, &bar, &delta, &w_ref);
        let truth = value_functions(&mdp, &pi).unwrap().v0 - value_functions(&mdp, &bar).unwrap().v0;
        assert!((d - truth).abs() <= 1e-10, "{d} vs {truth}");
        let pd = performance_difference(&mdp, &pi, &bar).unwrap();
        assert!((pd - truth).abs() <= 1e-10, "{pd} vs {truth}");
    }
}

#[test]
fn stochastic_policies_also_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let mdp = random_mdp(&mut rng, 3, 3, 3).unwrap();
        let pi = Policy::uniform(3, 3, 3);
        let bar: Policy = random_deterministic_policy(&mut rng, 3, 3, 3);
        let w_ref = forward_visitations(&mdp, &bar).unwrap().w[..3].to_vec();
        let delta = delta_recursion(&mdp, &pi, &bar, &w_ref, None).unwrap();
        let d = d_hat(&mdp, &pi, &bar, &delta, &w_ref);
        let pd = performance_difference(&mdp, &pi, &bar).unwrap();
        assert!((d - pd).abs() <= 1e-10);
    }
}

/// One replication: `k` uniform episodes for the model, `k` reference
/// episodes for `w_ref`.
fn replicate(seed: u64, k: u64) -> f64 {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let mut sim = Simulator::new(&mdp, seed);
    let mut explore = EpisodeDataset::new(4, 3, 2, "mu");
    sim.collect(&Policy::uniform(4, 3, 2), k, &mut explore).unwrap();
    let mut reference = EpisodeDataset::new(4, 3, 2, "ref");
    sim.collect(&pis[0], k, &mut reference).unwrap();
    let model = estimate_model(&explore).unwrap().model;
    let w_ref = estimate_reference(&reference).unwrap();
    let delta = delta_recursion(&model, &pis[1], &pis[0], &w_ref, None).unwrap();
    d_hat(&model, &pis[1], &pis[0], &delta, &w_ref)
}

#[test]
fn estimate_concentrates_with_more_data() {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let truth = performance_difference(&mdp, &pis[1], &pis[0]).unwrap();
    let reps = 100;
    let mut last = f64::INFINITY;
    for k in [1_000u64, 100_000] {
        let errs: Vec<f64> = (0..reps).map(|r| replicate(k * 1000 + r, k) - truth).collect();
        let rmse = (errs.iter().map(|e| e * e).sum::<f64>() / reps as f64).sqrt();
        assert!(rmse < last);
        last = rmse;
        let mean = errs.iter().sum::<f64>() / reps as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        assert!(
            mean.abs() <= 4.0 * sd / (reps as f64).sqrt() + 1e-12,
            "bias {mean} at K={k}"
        );
    }
}
