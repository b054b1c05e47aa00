use crate::error::{Error, Result};
use crate::estimator::EpisodeDataset;
use crate::explore::backend::{with_action, BackendMode, ExplorationBackend};

/// Extra batches allowed per `(s, a)` when the first batch falls short.
const TOP_UP_ROUNDS: u32 = 64;

#[derive(Clone, Debug)]
pub struct UnifExpResult {
    pub data: EpisodeDataset,
    /// Every `(s, a)` with `W*_h(s) > eps_unif` met its count target.
    pub certified: bool,
    pub episodes: u64,
}

/// Collects at least `W*_h(s) K / (2SA)` visits of every `(s, a, h)` with
/// `W*_h(s) > eps_unif`.
///
/// Each such `(s, a)` gets `ceil(K / SA)` episodes of the reaching policy
/// for `s` with `a` forced at `(h, s)`, then further batches until the
/// target holds. In online mode the unknown `W*` is replaced by the
/// backend's upper bound, so the target is conservative.
pub fn unif_exp(
    backend: &mut ExplorationBackend<'_>,
    eps_unif: f64,
    k: f64,
    delta: f64,
    h: usize,
) -> Result<UnifExpResult> {
    if !(eps_unif > 0.0) || !(k >= 0.0 && k.is_finite()) {
        return Err(Error::Config(format!(
            "need eps_unif > 0 and finite K >= 0, got {eps_unif}, {k}"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    let (s_n, a_n, h_n) = (backend.num_states(), backend.num_actions(), backend.horizon());
    if h >= h_n {
        return Err(Error::Config(format!("step {h} outside horizon {h_n}")));
    }
    let start = backend.episodes();
    let mut data = EpisodeDataset::new(s_n, a_n, h_n, format!("unif-h{h}"));
    let sa = (s_n * a_n) as f64;
    let batch = (k / sa).ceil() as u64;
    let mut certified = true;
    if batch == 0 {
        return Ok(UnifExpResult {
            data,
            certified,
            episodes: 0,
        });
    }
    let cell_delta = delta / sa;
    for s in 0..s_n {
        let reach = backend.reach(h, s, cell_delta)?;
        let w = backend.exact_reach(h, s).unwrap_or(reach.upper);
        if w <= eps_unif {
            continue;
        }
        for a in 0..a_n {
            let mut policy = with_action(&reach.policy, h, s, a)?;
            let mut bound = w;
            let mut rounds = 0;
            loop {
                backend.collect(&policy, batch, &mut data)?;
                if backend.mode() == BackendMode::Online {
                    let fresh = backend.reach(h, s, cell_delta)?;
                    bound = fresh.upper;
                    policy = with_action(&fresh.policy, h, s, a)?;
                }
                if bound <= eps_unif || data.count(h, s, a) as f64 >= bound * k / (2.0 * sa) {
                    break;
                }
                rounds += 1;
                if rounds > TOP_UP_ROUNDS {
                    certified = false;
                    break;
                }
            }
        }
    }
    Ok(UnifExpResult {
        data,
        certified,
        episodes: backend.episodes() - start,
    })
}
