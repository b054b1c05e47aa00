use perp_core::explore::{fw_objective, optcov, prune, unif_exp, BackendMode, ExplorationBackend, OptCovConfig};
use perp_core::instances::figure1_m;
use perp_core::sim::Simulator;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..10);
        let n = rng.random_range(1..6);
        let eta = 10f64.powf(rng.random_range(-1.0..2.0));
        let phis: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let lambda0: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..0.5)).collect();
        let (_, grad) = fw_objective(eta, &phis, &lambda, &lambda0).unwrap();
        let fd: Vec<f64> = (0..d)
            .map(|i| {
                let step = 1e-5 * lambda[i];
                let mut up = lambda.clone();
                up[i] += step;
                let mut down = lambda.clone();
                down[i] -= step;
                let f = |l: &[f64]| fw_objective(eta, &phis, l, &lambda0).unwrap().0;
                (f(&up) - f(&down)) / (2.0 * step)
            })
            .collect();
        let num: f64 = grad.iter().zip(&fd).map(|(g, f)| (g - f).powi(2)).sum::<f64>().sqrt();
        let den: f64 = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(num / den);
    }
    assert!(worst <= 1e-5, "{worst}");
}

fn certify(mode: BackendMode, seed: u64) {
    let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
    let mut b = ExplorationBackend::new(Simulator::new(&mdp, seed), mode);
    let eps_unif = 0.01;
    let kept = prune(&mut b, eps_unif, 0.05).unwrap();
    assert!(kept.certified);
    assert_eq!(kept.keep[1], vec![false, true, true, true]);
    let mut d1 = vec![0.0; 12];
    d1[3] = 0.3;
    d1[6] = -0.3;
    let mut d2 = vec![0.0; 12];
    d2[9] = 0.2;
    let cfg = OptCovConfig::new(vec![d1, d2], 1e-3, 0.05, eps_unif, 1e3, kept.keep[1].clone(), 1);
    let r = optcov(&mut b, &cfg).unwrap();
    assert!(r.coverage.holds(1e-3), "{:?}", r.coverage);
    assert!(r.coverage.min_count_ratio >= 1.0);
}

#[test]
fn optcov_certifies_with_the_oracle_backend() {
    certify(BackendMode::Oracle, 3);
}

#[test]
fn optcov_certifies_with_the_online_backend() {
    certify(BackendMode::Online, 4);
}

#[test]
fn uniform_exploration_meets_counts() {
    let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
    let mut b = ExplorationBackend::new(Simulator::new(&mdp, 9), BackendMode::Oracle);
    let k = 1200.0;
    let r = unif_exp(&mut b, 0.05, k, 0.1, 1).unwrap();
    assert!(r.certified);
    // W* is 0.7, 0.2, 0.1 on states 1..3 at step 2
    for (s, w) in [(1, 0.7), (2, 0.2), (3, 0.1)] {
        for a in 0..3 {
            assert!(r.data.count(1, s, a) as f64 >= w * k / 24.0);
        }
    }
    assert_eq!(r.episodes, b.episodes());
}
