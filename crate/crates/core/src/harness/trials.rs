use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{gap_profile, Policy, TabularMdp};
use crate::perp::{perp, PerpConfig, PerpReport};
use crate::sim::Simulator;

/// One independent run. Trial `k` draws from stream `k` of `seed`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRow {
    pub trial: u64,
    pub seed: u64,
    pub stream: u64,
    /// Empty when the run failed.
    pub chosen: Option<usize>,
    pub gap: Option<f64>,
    pub eps_optimal: bool,
    pub episodes: u64,
    pub epochs: usize,
    pub status: String,
    /// Every OptCov call met both coverage inequalities.
    pub optcov_certified: bool,
    /// Largest `design / eps_exp` over all OptCov calls.
    pub worst_design_ratio: f64,
    /// Smallest kept-cell count ratio over all OptCov calls.
    pub min_count_ratio: f64,
    /// The last epoch's `D_hat` argmax is among the final survivors.
    pub argmax_survived: bool,
    pub survivors: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialSummary {
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// 95% Wilson interval for the success probability.
    pub ci_low: f64,
    pub ci_high: f64,
    pub mean_episodes: f64,
    pub median_episodes: f64,
    pub failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub rows: Vec<TrialRow>,
    pub summary: TrialSummary,
}

impl TrialReport {
    pub fn from_rows(rows: Vec<TrialRow>) -> Self {
        let summary = summarize(&rows);
        Self { rows, summary }
    }

    /// Per-trial rows as CSV. Contains no timings, so equal inputs give
    /// byte-identical output.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::Internal(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }
}

pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n_f)) / (1.0 + z2 / n_f);
    let half = z / (1.0 + z2 / n_f) * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn summarize(rows: &[TrialRow]) -> TrialSummary {
    let n = rows.len();
    let successes = rows.iter().filter(|r| r.eps_optimal).count();
    let mut eps: Vec<u64> = rows.iter().map(|r| r.episodes).collect();
    eps.sort_unstable();
    let median_episodes = match n {
        0 => 0.0,
        _ if n % 2 == 1 => eps[n / 2] as f64,
        _ => (eps[n / 2 - 1] as f64 + eps[n / 2] as f64) / 2.0,
    };
    let mean_episodes = if n == 0 {
        0.0
    } else {
        eps.iter().map(|&e| e as f64).sum::<f64>() / n as f64
    };
    let (ci_low, ci_high) = wilson_interval(successes, n, 1.96);
    TrialSummary {
        trials: n,
        successes,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        ci_low,
        ci_high,
        mean_episodes,
        median_episodes,
        failures: rows.iter().filter(|r| r.chosen.is_none()).count(),
    }
}

fn row_from_report(trial: u64, seed: u64, gaps: &[f64], eps: f64, report: &PerpReport) -> TrialRow {
    let steps = report.epochs.iter().flat_map(|e| &e.steps);
    let mut worst_design_ratio = 0.0f64;
    let mut min_count_ratio = f64::INFINITY;
    let mut optcov_certified = true;
    for s in steps {
        if s.eps_exp > 0.0 {
            worst_design_ratio = worst_design_ratio.max(s.design / s.eps_exp);
        }
        min_count_ratio = min_count_ratio.min(s.min_count_ratio);
        optcov_certified &= s.certified();
    }
    let argmax_survived = report
        .epochs
        .last()
        .is_none_or(|e| report.final_survivors().contains(&e.argmax));
    let gap = gaps[report.chosen];
    TrialRow {
        trial,
        seed,
        stream: trial,
        chosen: Some(report.chosen),
        gap: Some(gap),
        eps_optimal: gap <= eps,
        episodes: report.total_episodes,
        epochs: report.epochs.len(),
        status: serde_json::to_value(report.status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default(),
        optcov_certified,
        worst_design_ratio,
        min_count_ratio,
        argmax_survived,
        survivors: report.final_survivors().len(),
    }
}

/// Runs `n` independent elimination runs in parallel, trial `k` on stream
/// `k` of `base_seed`, and merges the rows in trial order. A run that fails
/// is recorded with its error as status rather than aborting the batch.
pub fn run_trials(
    mdp: &TabularMdp<f64>,
    policies: &[Policy<f64>],
    cfg: &PerpConfig,
    n: u64,
    base_seed: u64,
) -> Result<TrialReport> {
    if n == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    cfg.validate()?;
    let gaps = gap_profile(mdp, policies, 0.0)?.values;
    let best = gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let gaps: Vec<f64> = gaps.iter().map(|v| best - v).collect();
    let rows = (0..n)
        .into_par_iter()
        .map(|k| {
            let sim = Simulator::with_stream(mdp, base_seed, k);
            match perp(sim, policies, cfg) {
                Ok((_, report)) => row_from_report(k, base_seed, &gaps, cfg.eps, &report),
                Err(e) => TrialRow {
                    trial: k,
                    seed: base_seed,
                    stream: k,
                    chosen: None,
                    gap: None,
                    eps_optimal: false,
                    episodes: 0,
                    epochs: 0,
                    status: format!("error: {e}"),
                    optcov_certified: false,
                    worst_design_ratio: f64::NAN,
                    min_count_ratio: f64::NAN,
                    argmax_survived: false,
                    survivors: 0,
                },
            }
        })
        .collect();
    Ok(TrialReport::from_rows(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::figure1_m;

    #[test]
    fn wilson_matches_hand_values() {
        let (lo, hi) = wilson_interval(45, 50, 1.96);
        assert!((lo - 0.7864).abs() < 1e-3 && (hi - 0.9565).abs() < 1e-3, "{lo} {hi}");
        assert_eq!(wilson_interval(0, 0, 1.96), (0.0, 1.0));
        let (lo, hi) = wilson_interval(10, 10, 1.96);
        assert!(lo > 0.69 && hi == 1.0);
    }

    #[test]
    fn same_seed_same_csv() {
        let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
        let cfg = PerpConfig::new(0.1, 0.1);
        let a = run_trials(&mdp, &pis, &cfg, 3, 5).unwrap();
        let b = run_trials(&mdp, &pis, &cfg, 3, 5).unwrap();
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
        assert_eq!(a.rows.len(), 3);
        assert!(a.rows.iter().enumerate().all(|(k, r)| r.trial == k as u64));
        assert!(a.summary.success_rate >= 0.0 && a.summary.success_rate <= 1.0);
    }

    #[test]
    fn single_trial_is_a_single_run() {
        let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
        let cfg = PerpConfig::new(0.1, 0.1);
        let r = run_trials(&mdp, &pis, &cfg, 1, 9).unwrap();
        let (chosen, report) = perp(Simulator::with_stream(&mdp, 9, 0), &pis, &cfg).unwrap();
        assert_eq!(r.rows[0].chosen, Some(chosen));
        assert_eq!(r.rows[0].episodes, report.total_episodes);
        assert!(run_trials(&mdp, &pis, &cfg, 0, 9).is_err());
    }
}
