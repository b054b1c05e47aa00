use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::estimator::EpisodeDataset;
use crate::explore::backend::ExplorationBackend;
use crate::explore::objective::fw_objective;
use crate::explore::unif::unif_exp;

/// Largest single request handed to the simulator by the fallback.
const MAX_BATCH: f64 = 1e15;

#[derive(Clone, Debug)]
pub struct OptCovConfig {
    /// Directions in `R^{SA}`, zero outside kept states.
    pub directions: Vec<Vec<f64>>,
    pub eps_exp: f64,
    pub delta: f64,
    pub eps_unif: f64,
    pub k_unif: f64,
    /// Kept states `S_0` at `step`.
    pub keep: Vec<bool>,
    pub step: usize,
    /// Multiplier of the epoch guard.
    pub c_guard: f64,
    /// Hard limit on epochs before falling back.
    pub max_epochs: Option<u32>,
}

impl OptCovConfig {
    pub fn new(
        directions: Vec<Vec<f64>>,
        eps_exp: f64,
        delta: f64,
        eps_unif: f64,
        k_unif: f64,
        keep: Vec<bool>,
        step: usize,
    ) -> Self {
        Self {
            directions,
            eps_exp,
            delta,
            eps_unif,
            k_unif,
            keep,
            step,
            c_guard: 1e3,
            max_epochs: None,
        }
    }

    fn validate(&self, num_states: usize, num_actions: usize, horizon: usize) -> Result<()> {
        for (name, v) in [
            ("eps_exp", self.eps_exp),
            ("eps_unif", self.eps_unif),
            ("k_unif", self.k_unif),
            ("c_guard", self.c_guard),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if self.k_unif * self.eps_unif < 1.0 - 1e-9 {
            return Err(Error::Config(format!(
                "k_unif = {} is below 1 / eps_unif = {}",
                self.k_unif,
                1.0 / self.eps_unif
            )));
        }
        if self.step >= horizon {
            return Err(Error::Config(format!("step {} outside horizon {horizon}", self.step)));
        }
        check_dim("kept states", num_states, self.keep.len())?;
        for phi in &self.directions {
            check_dim("direction length", num_states * num_actions, phi.len())?;
            for (i, &x) in phi.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::Config("direction has a non-finite entry".into()));
                }
                if x != 0.0 && !self.keep[i / num_actions] {
                    return Err(Error::Config(format!(
                        "direction is nonzero on dropped state {}",
                        i / num_actions
                    )));
                }
            }
        }
        Ok(())
    }

    /// `C_guard S^2 A^2 H^2 log(1/delta) log(max(|Phi|, 2)) / eps_exp`.
    pub fn guard(&self, num_states: usize, num_actions: usize, horizon: usize) -> f64 {
        let (s, a, h) = (num_states as f64, num_actions as f64, horizon as f64);
        let n_dirs = self.directions.len().max(2) as f64;
        self.c_guard * (s * a * h).powi(2) * (1.0 / self.delta).ln() * n_dirs.ln() / self.eps_exp
    }
}

/// Per-epoch progress of an OptCov run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochProgress {
    pub epoch: u32,
    /// Episodes used by this call up to the end of the epoch.
    pub episodes: u64,
    /// Smoothed objective at the final iterate of the epoch.
    pub f_value: f64,
    pub certified: bool,
}

/// The two posted inequalities evaluated on a covariance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coverage {
    /// `max_phi ||phi||^2_{Sigma^-1}`.
    pub design: f64,
    /// Smallest kept-state count divided by `eps_unif K_unif / 2SA`.
    pub min_count_ratio: f64,
}

impl Coverage {
    pub fn holds(&self, eps_exp: f64) -> bool {
        self.design <= eps_exp && self.min_count_ratio >= 1.0
    }
}

#[derive(Clone, Debug)]
pub struct OptCovResult {
    pub data: EpisodeDataset,
    /// Step-`h` counts of `data`.
    pub covariance: Vec<f64>,
    pub coverage: Coverage,
    pub fallback: bool,
    pub episodes: u64,
    pub progress: Vec<EpochProgress>,
}

/// Evaluates both inequalities for `counts` (an `S * A` vector).
pub fn coverage(directions: &[Vec<f64>], counts: &[f64], keep: &[bool], eps_unif: f64, k_unif: f64) -> Coverage {
    let num_actions = counts.len() / keep.len().max(1);
    let design = directions
        .iter()
        .map(|phi| {
            phi.iter()
                .zip(counts)
                .map(|(&p, &n)| match (p == 0.0, n > 0.0) {
                    (true, _) => 0.0,
                    (false, true) => p * p / n,
                    (false, false) => f64::INFINITY,
                })
                .sum::<f64>()
        })
        .fold(0.0, f64::max);
    let floor = eps_unif * k_unif / (2.0 * counts.len() as f64);
    let min_count_ratio = counts
        .iter()
        .enumerate()
        .filter(|(i, _)| keep[i / num_actions])
        .map(|(_, &n)| n / floor)
        .fold(f64::INFINITY, f64::min);
    Coverage {
        design,
        min_count_ratio,
    }
}

/// Online experiment design at one step.
///
/// Epoch `i` runs `2^i` Frank-Wolfe iterations of `2^i` episodes each on the
/// smoothed objective with `eta_i = 2^{2i/5}`, regularised by a fresh
/// uniform-exploration batch. The run stops at the first epoch whose data
/// satisfies both inequalities; once `4^i` passes the guard it falls back to
/// one large uniform-exploration call. Any return that misses either
/// inequality is an error.
pub fn optcov(backend: &mut ExplorationBackend<'_>, cfg: &OptCovConfig) -> Result<OptCovResult> {
    let (s_n, a_n, h_n) = (backend.num_states(), backend.num_actions(), backend.horizon());
    cfg.validate(s_n, a_n, h_n)?;
    let h = cfg.step;
    let sa = s_n * a_n;
    let directions: Vec<Vec<f64>> = if cfg.directions.is_empty() {
        vec![vec![0.0; sa]]
    } else {
        cfg.directions.clone()
    };
    let guard = cfg.guard(s_n, a_n, h_n);
    let start = backend.episodes();
    let mut progress = Vec::new();
    let mut epoch = 1u32;
    loop {
        if cfg.max_epochs.is_some_and(|m| epoch > m) {
            break;
        }
        let t_i = 1u64 << epoch;
        let tk = t_i * t_i;
        if tk as f64 > guard {
            break;
        }
        let tk_f = tk as f64;
        let unif = unif_exp(
            backend,
            cfg.eps_unif,
            tk_f + cfg.k_unif,
            cfg.delta / (8.0 * f64::from(epoch).powi(2)),
            h,
        )?;
        let lambda0: Vec<f64> = unif
            .data
            .counts_at(h)
            .iter()
            .enumerate()
            .map(|(i, &n)| if cfg.keep[i / a_n] { n as f64 / tk_f } else { tk_f })
            .collect();
        let eta = 2f64.powf(2.0 * f64::from(epoch) / 5.0);
        let mut fw = EpisodeDataset::new(s_n, a_n, h_n, format!("fw-h{h}"));
        let mut lambda = vec![0.0; sa];
        for t in 0..t_i {
            let (_, grad) = fw_objective(eta, &directions, &lambda, &lambda0)?;
            let weight: Vec<f64> = grad.iter().map(|g| -g).collect();
            let policy = backend.plan_lmo(h, &weight)?;
            backend.collect(&policy, t_i, &mut fw)?;
            let scale = ((t + 1) * t_i) as f64;
            for (l, &n) in lambda.iter_mut().zip(fw.counts_at(h)) {
                *l = n as f64 / scale;
            }
        }
        let (f_value, _) = fw_objective(eta, &directions, &lambda, &lambda0)?;
        let mut data = fw;
        data.merge(&unif.data)?;
        data.tag = format!("optcov-h{h}");
        let counts: Vec<f64> = data.counts_at(h).iter().map(|&n| n as f64).collect();
        let cov = coverage(&directions, &counts, &cfg.keep, cfg.eps_unif, cfg.k_unif);
        let done = cov.holds(cfg.eps_exp);
        progress.push(EpochProgress {
            epoch,
            episodes: backend.episodes() - start,
            f_value,
            certified: done,
        });
        if done {
            return Ok(OptCovResult {
                data,
                covariance: counts,
                coverage: cov,
                fallback: false,
                episodes: backend.episodes() - start,
                progress,
            });
        }
        epoch += 1;
    }
    fallback(backend, cfg, &directions, start, progress)
}

fn fallback(
    backend: &mut ExplorationBackend<'_>,
    cfg: &OptCovConfig,
    directions: &[Vec<f64>],
    start: u64,
    progress: Vec<EpochProgress>,
) -> Result<OptCovResult> {
    let (s_n, a_n) = (backend.num_states(), backend.num_actions());
    let h = cfg.step;
    let mut c_phi = 0.0f64;
    for s in (0..s_n).filter(|&s| cfg.keep[s]) {
        let floor = backend.exact_reach(h, s).unwrap_or(cfg.eps_unif).max(cfg.eps_unif);
        for phi in directions {
            for a in 0..a_n {
                c_phi = c_phi.max(phi[s * a_n + a].abs() / floor);
            }
        }
    }
    let c2 = 8.0 * ((s_n * a_n) as f64).powi(2) * c_phi * c_phi;
    let k = c2 / cfg.eps_exp + (c2 + 1.0) * cfg.k_unif;
    if k / (s_n * a_n) as f64 > MAX_BATCH {
        return Err(Error::Certification(format!(
            "fallback exploration at step {h} would need {k:.3e} episodes"
        )));
    }
    let unif = unif_exp(backend, cfg.eps_unif, k, cfg.delta / 4.0, h)?;
    let mut data = unif.data;
    data.tag = format!("optcov-fallback-h{h}");
    let counts: Vec<f64> = data.counts_at(h).iter().map(|&n| n as f64).collect();
    let cov = coverage(directions, &counts, &cfg.keep, cfg.eps_unif, cfg.k_unif);
    if !cov.holds(cfg.eps_exp) {
        return Err(Error::Certification(format!(
            "step {h}: design {:.3e} vs eps_exp {:.3e}, min count ratio {:.3}",
            cov.design, cfg.eps_exp, cov.min_count_ratio
        )));
    }
    Ok(OptCovResult {
        data,
        covariance: counts,
        coverage: cov,
        fallback: true,
        episodes: backend.episodes() - start,
        progress,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explore::BackendMode;
    use crate::instances::figure1_m;
    use crate::sim::Simulator;

    // states reachable at step 2
    fn all_kept() -> Vec<bool> {
        vec![false, true, true, true]
    }

    #[test]
    fn zero_direction_certifies_in_first_epoch() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let mut b = ExplorationBackend::new(Simulator::new(&mdp, 1), BackendMode::Oracle);
        let mut keep = vec![false; 4];
        keep[0] = true;
        let cfg = OptCovConfig::new(vec![vec![0.0; 12]], 1e-3, 0.1, 0.01, 100.0, keep, 0);
        let r = optcov(&mut b, &cfg).unwrap();
        assert_eq!(r.progress.len(), 1);
        assert!(!r.fallback);
        assert_eq!(r.coverage.design, 0.0);
        assert_eq!(r.episodes, b.episodes());
    }

    #[test]
    fn single_cell_needs_about_one_over_eps() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let mut b = ExplorationBackend::new(Simulator::new(&mdp, 2), BackendMode::Oracle);
        // (s3, a1) at step 2 is reached with probability one
        let mut e = vec![0.0; 12];
        e[2 * 3] = 1.0;
        let eps_exp = 1e-3;
        let cfg = OptCovConfig::new(vec![e], eps_exp, 0.1, 0.01, 100.0, all_kept(), 1);
        let r = optcov(&mut b, &cfg).unwrap();
        assert!(r.coverage.holds(eps_exp));
        assert!(r.covariance[6] >= 1.0 / eps_exp);
        assert!((r.episodes as f64) < 64.0 / eps_exp, "{}", r.episodes);
    }

    #[test]
    fn rejects_directions_on_dropped_states() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let mut b = ExplorationBackend::new(Simulator::new(&mdp, 2), BackendMode::Oracle);
        let mut keep = all_kept();
        keep[3] = false;
        let mut e = vec![0.0; 12];
        e[9] = 1.0;
        let cfg = OptCovConfig::new(vec![e], 1e-3, 0.1, 0.01, 100.0, keep, 1);
        assert!(optcov(&mut b, &cfg).is_err());
        let bad_k = OptCovConfig::new(vec![], 1e-3, 0.1, 0.01, 10.0, all_kept(), 1);
        assert!(optcov(&mut b, &bad_k).is_err());
    }

    #[test]
    fn tight_guard_takes_the_fallback() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let mut b = ExplorationBackend::new(Simulator::new(&mdp, 3), BackendMode::Oracle);
        let mut e = vec![0.0; 12];
        e[3] = 0.5;
        e[7] = -0.2;
        let mut cfg = OptCovConfig::new(vec![e], 1e-3, 0.1, 0.01, 100.0, all_kept(), 1);
        cfg.max_epochs = Some(0);
        let r = optcov(&mut b, &cfg).unwrap();
        assert!(r.fallback);
        assert!(r.coverage.holds(1e-3));
        assert!(r.progress.is_empty());
    }

    #[test]
    fn coverage_is_monotone_in_counts() {
        let dirs = vec![vec![1.0, 0.5, 0.0, 0.0], vec![0.0, 0.0, 2.0, 1.0]];
        let keep = vec![true, true];
        let mut counts = vec![1.0, 2.0, 3.0, 4.0];
        let mut last = coverage(&dirs, &counts, &keep, 0.1, 10.0).design;
        for i in 0..20 {
            counts[i % 4] += 1.0 + i as f64;
            let now = coverage(&dirs, &counts, &keep, 0.1, 10.0).design;
            assert!(now <= last);
            last = now;
        }
    }
}
