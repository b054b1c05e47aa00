//! Acceptance checks, one line each. Exits nonzero when any check fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use perp_core::design::{
    brute_force_design, closed_form_action_independent, closed_form_contextual, kl_sample_lower_bound,
    solve_min_max_design, step_visitation, u_complexity, DesignProblem, Direction, DirectionKind, MeasureConfig,
};
use perp_core::estimator::{d_hat, delta_recursion, estimate_model, estimate_reference, EpisodeDataset};
use perp_core::explore::fw_objective;
use perp_core::harness::{comparison_instance, comparison_rows, raw_designs, run_trials, CheckStatus};
use perp_core::instances::{
    context_policy, contextual_bandit, figure1_m, figure1_m_prime, random_action_independent_mdp,
    random_deterministic_policy, random_mdp, random_simplex,
};
use perp_core::mdp::{compute_u, forward_visitations, gap_profile, performance_difference, value_functions};
use perp_core::perp::{epoch_limit, PerpConfig};
use perp_core::sim::Simulator;
use perp_core::{Mdp, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn differences(mdp: &Mdp, pis: &[Policy], h: usize, star: usize) -> Vec<Direction> {
    let s = step_visitation(mdp, &pis[star], h);
    pis.iter()
        .enumerate()
        .filter(|&(i, _)| i != star)
        .map(|(i, p)| {
            let d: Vec<f64> = s.iter().zip(step_visitation(mdp, p, h)).map(|(a, b)| a - b).collect();
            Direction::from_vector(&d, DirectionKind::Difference { policy: i })
        })
        .collect()
}

fn figure1_designs() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for eps in [0.1, 0.01] {
        let (mdp, pis) = figure1_m::<f64>(eps, false).map_err(|e| e.to_string())?;
        let (diff, single) = raw_designs(&mdp, &pis, 1, 1e-6).map_err(|e| e.to_string())?;
        let oracle = brute_force_design(&mdp, 1, &differences(&mdp, &pis, 1, 0), 100_000).map_err(|e| e.to_string())?;
        let bound = 15.0 * eps * eps;
        let close = (diff.value - oracle.value).abs() <= 0.01 * oracle.value;
        ok &= diff.certified && single.certified && diff.value <= bound && single.value >= 1.0 && close;
        parts.push(format!(
            "eps={eps}: diff={:.4e} (bound {bound:.4e}, oracle {:.4e}) single={:.4}",
            diff.value, oracle.value, single.value
        ));
    }
    ensure(ok, parts.join("; "))
}

fn u_term() -> Check {
    let mut parts = Vec::new();
    let mut ok = true;
    for eps in [0.1, 0.01] {
        let (mdp, pis) = figure1_m::<f64>(eps, false).map_err(|e| e.to_string())?;
        let u = compute_u(&mdp, &pis[1], &pis[0]).map_err(|e| e.to_string())?.total;
        let uc = u_complexity(&mdp, &pis, &MeasureConfig::new(eps))
            .map_err(|e| e.to_string())?
            .total;
        let target = 3.0 * mdp.horizon() as f64 / eps;
        ok &= (u - 3.0 * eps).abs() <= 1e-12 && (uc - target).abs() <= 1e-9 * target;
        parts.push(format!("eps={eps}: U={u:.3e} complexity={uc:.6}"));
    }
    ensure(ok, parts.join("; "))
}

fn kl_bound() -> Check {
    let (eps, kappa) = (0.1, 0.1);
    let (m, _) = figure1_m::<f64>(eps, false).map_err(|e| e.to_string())?;
    let (mp, _) = figure1_m_prime::<f64>(eps, false).map_err(|e| e.to_string())?;
    let r = kl_sample_lower_bound(&m, &mp, kappa).map_err(|e| e.to_string())?;
    let one = r.cells.len() == 1 && (r.cells[0].h, r.cells[0].s, r.cells[0].a) == (0, 0, 0);
    let kl = r.cells.first().map_or(f64::NAN, |c| c.kl);
    let floor = (1.0 / (2.4 * kappa)).ln() / eps;
    ensure(
        one && (kl - eps * 2f64.ln()).abs() <= 1e-12 && kl <= eps && r.episode_bound >= floor,
        format!(
            "cells={} KL={kl:.12} episodes>={:.3} (floor {floor:.3})",
            r.cells.len(),
            r.episode_bound
        ),
    )
}

fn estimator_identity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (s, a, h) = (
            rng.random_range(1..=6),
            rng.random_range(1..=4),
            rng.random_range(1..=5),
        );
        let mdp = random_mdp(&mut rng, s, a, h).map_err(|e| e.to_string())?;
        let pi: Policy = random_deterministic_policy(&mut rng, s, a, h);
        let bar: Policy = random_deterministic_policy(&mut rng, s, a, h);
        let w_ref = forward_visitations(&mdp, &bar).map_err(|e| e.to_string())?.w[..h].to_vec();
        let delta = delta_recursion(&mdp, &pi, &bar, &w_ref, None).map_err(|e| e.to_string())?;
        let d = d_hat(&mdp, &pi, &bar, &delta, &w_ref);
        let v = |p: &Policy| value_functions(&mdp, p).map(|v| v.v0).map_err(|e| e.to_string());
        let truth = v(&pi)? - v(&bar)?;
        let pd = performance_difference(&mdp, &pi, &bar).map_err(|e| e.to_string())?;
        worst = worst.max((d - truth).abs()).max((pd - truth).abs());
    }
    ensure(worst <= 1e-10, format!("max error {worst:.2e} over 100 instances"))
}

fn estimator_consistency() -> Check {
    let (mdp, pis) = figure1_m::<f64>(0.1, false).map_err(|e| e.to_string())?;
    let truth = performance_difference(&mdp, &pis[1], &pis[0]).map_err(|e| e.to_string())?;
    let uniform = Policy::uniform(4, 3, 2);
    let reps = 200usize;
    let mut stats = Vec::new();
    for (i, k) in [1_000u64, 10_000, 100_000].into_iter().enumerate() {
        let mut errs = Vec::with_capacity(reps);
        for r in 0..reps {
            let mut sim = Simulator::with_stream(&mdp, 500 + i as u64, r as u64);
            let mut explore = EpisodeDataset::new(4, 3, 2, "uniform");
            sim.collect(&uniform, k, &mut explore).map_err(|e| e.to_string())?;
            let mut reference = EpisodeDataset::new(4, 3, 2, "reference");
            sim.collect(&pis[0], k, &mut reference).map_err(|e| e.to_string())?;
            let model = estimate_model(&explore).map_err(|e| e.to_string())?.model;
            let w_ref = estimate_reference(&reference).map_err(|e| e.to_string())?;
            let delta = delta_recursion(&model, &pis[1], &pis[0], &w_ref, None).map_err(|e| e.to_string())?;
            errs.push(d_hat(&model, &pis[1], &pis[0], &delta, &w_ref) - truth);
        }
        let n = reps as f64;
        let sq: Vec<f64> = errs.iter().map(|e| e * e).collect();
        let mse = sq.iter().sum::<f64>() / n;
        let mse_sd = (sq.iter().map(|x| (x - mse).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let rmse = mse.sqrt();
        // delta method for the standard error of the root
        let rmse_se = mse_sd / n.sqrt() / (2.0 * rmse);
        let mean = errs.iter().sum::<f64>() / n;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        stats.push((k, rmse, rmse_se, mean, sd / n.sqrt()));
    }
    let monotone = stats.windows(2).all(|w| w[1].1 <= w[0].1 + 2.0 * (w[0].2 + w[1].2));
    let last = stats[2];
    let unbiased = last.3.abs() <= 3.0 * last.4;
    let detail = stats
        .iter()
        .map(|(k, r, _, m, se)| format!("K={k}: rmse={r:.3e} bias={m:.2e}±{se:.1e}"))
        .collect::<Vec<_>>()
        .join("; ");
    ensure(monotone && unbiased, detail)
}

fn solve_value(mdp: &Mdp, h: usize, dirs: Vec<Direction>) -> Result<f64, String> {
    if dirs.iter().all(Direction::is_zero) {
        return Ok(0.0);
    }
    let sol = solve_min_max_design(&DesignProblem::new(mdp, h, dirs)).map_err(|e| e.to_string())?;
    if !sol.certified {
        return Err("uncertified design".into());
    }
    Ok(sol.value)
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(1e-300)
    }
}

fn closed_forms() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_ctx: f64 = 0.0;
    for _ in 0..20 {
        let contexts = rng.random_range(2..6);
        let mu = random_simplex(&mut rng, contexts);
        let rewards: Vec<Vec<f64>> = (0..contexts).map(|_| (0..2).map(|_| rng.random()).collect()).collect();
        let mdp = contextual_bandit(&mu, &rewards).map_err(|e| e.to_string())?;
        let pis: Vec<Policy> = (0..3)
            .map(|_| {
                let rule: Vec<usize> = (0..contexts).map(|_| rng.random_range(0..2)).collect();
                context_policy(2, &rule).expect("actions in range")
            })
            .collect();
        let closed = closed_form_contextual(&mu, &pis).map_err(|e| e.to_string())?;
        let mut dirs = Vec::new();
        for i in 0..pis.len() {
            for j in i + 1..pis.len() {
                let a = step_visitation(&mdp, &pis[i], 1);
                let b = step_visitation(&mdp, &pis[j], 1);
                let d: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                dirs.push(Direction::from_vector(&d, DirectionKind::Custom));
            }
        }
        worst_ctx = worst_ctx.max(rel_err(solve_value(&mdp, 1, dirs)?, closed));
    }
    let mut worst_ai: f64 = 0.0;
    for _ in 0..20 {
        let mdp = random_action_independent_mdp(&mut rng, 3, 2, 3).map_err(|e| e.to_string())?;
        let pis: Vec<Policy> = (0..3).map(|_| random_deterministic_policy(&mut rng, 3, 2, 3)).collect();
        let closed = closed_form_action_independent(&mdp, &pis).map_err(|e| e.to_string())?;
        let star = gap_profile(&mdp, &pis, 1e-12).map_err(|e| e.to_string())?.best;
        for (h, &c) in closed.iter().enumerate() {
            worst_ai = worst_ai.max(rel_err(solve_value(&mdp, h, differences(&mdp, &pis, h, star))?, c));
        }
    }
    ensure(
        worst_ctx <= 0.02 && worst_ai <= 0.02,
        format!("max relative gap: contextual {worst_ctx:.2e}, action-independent {worst_ai:.2e}"),
    )
}

fn comparison_ordering() -> Check {
    let mut violations = 0;
    let mut uncertified = 0;
    for i in 0..50 {
        let (mdp, pis) = comparison_instance(77, i).map_err(|e| e.to_string())?;
        for row in comparison_rows(&mdp, &pis, 0.05).map_err(|e| e.to_string())? {
            violations += (row.status != CheckStatus::Pass) as usize;
            uncertified += (!row.certified) as usize;
        }
    }
    ensure(
        violations == 0 && uncertified == 0,
        format!("{violations} violations, {uncertified} uncertified rows over 50 instances"),
    )
}

fn perp_trials() -> (Check, Check) {
    let (mdp, pis) = match figure1_m::<f64>(0.1, false) {
        Ok(x) => x,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let cfg = PerpConfig::new(0.02, 0.05);
    let report = match run_trials(&mdp, &pis, &cfg, 50, 2024) {
        Ok(r) => r,
        Err(e) => return (Err(e.to_string()), Err(e.to_string())),
    };
    let limit = epoch_limit(cfg.eps);
    let s = &report.summary;
    let argmax = report.rows.iter().all(|r| r.argmax_survived);
    let epochs = report.rows.iter().all(|r| r.epochs <= limit as usize);
    let errors = report.rows.iter().filter(|r| r.status.starts_with("error")).count();
    let e2e = ensure(
        s.success_rate >= 0.9 && argmax && epochs && errors == 0,
        format!(
            "success {}/{} (95% CI {:.3}-{:.3}), argmax kept: {argmax}, epochs <= {limit}: {epochs}, mean episodes {:.3e}",
            s.successes, s.trials, s.ci_low, s.ci_high, s.mean_episodes
        ),
    );
    let bad = report.rows.iter().filter(|r| !r.optcov_certified).count();
    let worst = report.rows.iter().map(|r| r.worst_design_ratio).fold(0.0, f64::max);
    let floor = report
        .rows
        .iter()
        .map(|r| r.min_count_ratio)
        .fold(f64::INFINITY, f64::min);
    let cert = ensure(
        bad == 0 && errors == 0,
        format!("{bad} certification errors; worst design/eps_exp {worst:.3}, min count ratio {floor:.3}"),
    );
    (e2e, cert)
}

fn gradient_check() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(2..12);
        let n = rng.random_range(1..8);
        let eta = 10f64.powf(rng.random_range(-1.0..2.0));
        let phis: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..2.0)).collect();
        let lambda0: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..0.5)).collect();
        let f = |l: &[f64]| {
            fw_objective(eta, &phis, l, &lambda0)
                .map(|x| x.0)
                .map_err(|e| e.to_string())
        };
        let (_, grad) = fw_objective(eta, &phis, &lambda, &lambda0).map_err(|e| e.to_string())?;
        let mut num = 0.0;
        for i in 0..d {
            let step = 1e-5 * lambda[i];
            let mut up = lambda.clone();
            up[i] += step;
            let mut down = lambda.clone();
            down[i] -= step;
            let fd = (f(&up)? - f(&down)?) / (2.0 * step);
            num += (grad[i] - fd).powi(2);
        }
        let den = grad.iter().map(|g| g * g).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(num.sqrt() / den);
    }
    ensure(
        worst <= 1e-5,
        format!("max relative error {worst:.2e} over 100 configs"),
    )
}

fn reproducible_csv() -> Check {
    let run = || -> Result<Vec<u8>, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_perp"))
            .args(["trials", "--n", "10", "--base-seed", "7"])
            .env_remove("PERP_SEED")
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        Ok(out.stdout)
    };
    let (a, b) = (run()?, run()?);
    ensure(
        a == b && !a.is_empty(),
        format!(
            "{} bytes, {} lines, identical: {}",
            a.len(),
            a.iter().filter(|&&c| c == b'\n').count(),
            a == b
        ),
    )
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let res = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
    let took = start.elapsed();
    let in_time = limit.is_none_or(|l| took <= l);
    let (ok, detail) = match res {
        Ok(d) => (in_time, d),
        Err(d) => (false, d),
    };
    let budget = limit.map_or(String::new(), |l| format!(" (limit {}s)", l.as_secs()));
    println!(
        "[{}] {id:>2} {name}: {detail}; {:.2}s{budget}",
        if ok { "PASS" } else { "FAIL" },
        took.as_secs_f64()
    );
    ok
}

fn main() -> ExitCode {
    let secs = |s| Some(Duration::from_secs(s));
    let mut ok = true;
    ok &= report(1, "two-step design values", secs(10), figure1_designs);
    ok &= report(2, "U-term exactness", None, u_term);
    ok &= report(3, "KL lower bound", None, kl_bound);
    ok &= report(4, "estimator identity", None, estimator_identity);
    ok &= report(5, "estimator consistency", secs(120), estimator_consistency);
    ok &= report(6, "closed forms", None, closed_forms);
    ok &= report(7, "comparison ordering", None, comparison_ordering);
    let mut cert = None;
    ok &= report(8, "elimination end to end", secs(600), || {
        let (e2e, c) = perp_trials();
        cert = Some(c);
        e2e
    });
    ok &= report(9, "coverage certification", None, || {
        cert.unwrap_or_else(|| Err("trials did not run".into()))
    });
    ok &= report(10, "objective gradient", None, gradient_check);
    ok &= report(11, "reproducible trials CSV", None, reproducible_csv);
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
