use crate::error::{Error, Result};
use crate::estimator::EpisodeDataset;
use crate::explore::backend::{BackendMode, ExplorationBackend};

/// States kept for exploration, as `keep[h][s]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PruneResult {
    pub keep: Vec<Vec<bool>>,
    /// Every decision was certified (always true in oracle mode).
    pub certified: bool,
    pub episodes: u64,
}

impl PruneResult {
    pub fn kept_count(&self) -> usize {
        self.keep.iter().flatten().filter(|&&k| k).count()
    }
}

/// Splits `(h, s)` into kept states with `W*_h(s) >= eps_unif` and dropped
/// states with `W*_h(s) <= 32 eps_unif`.
///
/// Oracle mode thresholds the exact `W*` at `eps_unif` without sampling.
/// Online mode doubles the number of rollouts of an optimistic reaching
/// policy until a Hoeffding lower bound clears `eps_unif` (keep) or the
/// optimistic upper bound falls to `32 eps_unif` (drop).
pub fn prune(backend: &mut ExplorationBackend<'_>, eps_unif: f64, delta: f64) -> Result<PruneResult> {
    if !(eps_unif > 0.0) {
        return Err(Error::Config(format!("eps_unif must be positive, got {eps_unif}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (s_n, h_n) = (backend.num_states(), backend.horizon());
    let start = backend.episodes();
    let mut keep = vec![vec![false; s_n]; h_n];
    let mut certified = true;
    if eps_unif > 1.0 {
        return Ok(PruneResult {
            keep,
            certified,
            episodes: 0,
        });
    }
    keep[0][backend.initial_state()] = true;
    let per_target = delta / (s_n * h_n) as f64;
    for h in 1..h_n {
        for s in 0..s_n {
            match backend.mode() {
                BackendMode::Oracle => {
                    let w = backend.exact_reach(h, s).expect("oracle backend caches W*");
                    keep[h][s] = w >= eps_unif;
                }
                BackendMode::Online => {
                    let (k, ok) = online_decision(backend, h, s, eps_unif, per_target)?;
                    keep[h][s] = k;
                    certified &= ok;
                }
            }
        }
    }
    Ok(PruneResult {
        keep,
        certified,
        episodes: backend.episodes() - start,
    })
}

fn online_decision(
    backend: &mut ExplorationBackend<'_>,
    h: usize,
    s: usize,
    eps_unif: f64,
    delta: f64,
) -> Result<(bool, bool)> {
    let (s_n, a_n, h_n) = (backend.num_states(), backend.num_actions(), backend.horizon());
    let mut n = (4.0 / eps_unif).ceil() as u64;
    let mut estimate = 0.0;
    for round in 0..backend.max_rounds {
        let round_delta = delta / (2.0 * f64::from(round + 1).powi(2));
        let reach = backend.reach(h, s, round_delta)?;
        let mut batch = EpisodeDataset::new(s_n, a_n, h_n, "prune");
        backend.collect(&reach.policy, n, &mut batch)?;
        estimate = batch.state_visits(h, s) as f64 / n as f64;
        let lower = estimate - ((1.0 / round_delta).ln() / (2.0 * n as f64)).sqrt();
        if lower >= eps_unif {
            return Ok((true, true));
        }
        if backend.reach(h, s, round_delta)?.upper <= 32.0 * eps_unif {
            return Ok((false, true));
        }
        n = n.saturating_mul(2);
    }
    Ok((estimate >= eps_unif, false))
}
