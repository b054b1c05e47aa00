use perp_core::harness::run_trials;
use perp_core::instances::{figure1_m, planted_gap};
use perp_core::perp::{epoch_limit, perp, PerpConfig, PerpStatus};
use perp_core::sim::Simulator;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn figure1_trials_identify_a_good_policy() {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let cfg = PerpConfig::new(0.02, 0.05);
    let report = run_trials(&mdp, &pis, &cfg, 50, 11).unwrap();
    assert!(report.summary.success_rate >= 0.9, "{:?}", report.summary);
    let limit = epoch_limit(0.02);
    for row in &report.rows {
        assert!(row.argmax_survived, "{row:?}");
        assert!(row.optcov_certified, "{row:?}");
        assert!(row.epochs <= limit as usize);
    }
}

#[test]
fn planted_gap_trials_meet_the_confidence_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (mdp, pis) = planted_gap(&mut rng, 5, 3, 3, 6, 0.2).unwrap();
    let cfg = PerpConfig::new(0.05, 0.1);
    let report = run_trials(&mdp, &pis, &cfg, 6, 3).unwrap();
    assert!(report.rows.iter().all(|r| r.status != "epoch_limit" || r.eps_optimal));
    assert!(
        report.summary.success_rate >= 1.0 - 2.0 * cfg.kappa,
        "{:?}",
        report.summary
    );
}

#[test]
fn singleton_set_returns_immediately() {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let (chosen, report) = perp(Simulator::new(&mdp, 1), &pis[1..2], &PerpConfig::new(0.02, 0.05)).unwrap();
    assert_eq!(chosen, 0);
    assert_eq!(report.final_survivors(), &[0]);
    assert!(report.epochs.len() <= 1);
}

#[test]
fn same_seed_same_report() {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let cfg = PerpConfig::new(0.02, 0.05);
    let a = perp(Simulator::new(&mdp, 5), &pis, &cfg).unwrap();
    let b = perp(Simulator::new(&mdp, 5), &pis, &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn epoch_cap_and_survivors_shrink() {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let mut cfg = PerpConfig::new(0.02, 0.05);
    cfg.max_epochs = Some(1);
    let (_, report) = perp(Simulator::new(&mdp, 8), &pis, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 1);
    cfg.max_epochs = None;
    let (_, report) = perp(Simulator::new(&mdp, 8), &pis, &cfg).unwrap();
    let mut last = pis.len();
    for s in &report.survivors {
        assert!(s.len() <= last && !s.is_empty());
        last = s.len();
    }
    for e in &report.epochs {
        assert!(!e.eliminated.contains(&e.argmax));
    }
}

#[test]
fn episode_cap_gives_a_partial_report() {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
    let mut cfg = PerpConfig::new(0.02, 0.05);
    cfg.episode_cap = Some(1_000);
    let (chosen, report) = perp(Simulator::new(&mdp, 2), &pis, &cfg).unwrap();
    assert_eq!(report.status, PerpStatus::BudgetExhausted);
    assert!(report.total_episodes <= 1_000);
    assert!(chosen < pis.len());
}
