use rayon::prelude::*;

use crate::error::{check_dim, Error, Result};
use crate::estimator::dataset::EpisodeDataset;
use crate::mdp::{compute_u, gap_profile, Policy, RewardFamily, TabularMdp};
use crate::scalar::Scalar;

/// Count-based model estimate.
#[derive(Clone, Debug)]
pub struct EmpiricalModel {
    /// `P_hat` (uniform rows where unvisited) and `r_hat` (zero where unvisited).
    pub model: TabularMdp<f64>,
    /// Visit counts `N_h(s, a)` laid out `[h][s][a]`.
    pub counts: Vec<u64>,
}

impl EmpiricalModel {
    /// Cells `(h, s, a)` that were never visited.
    pub fn unvisited(&self) -> impl Iterator<Item = usize> + '_ {
        self.counts.iter().enumerate().filter(|(_, &n)| n == 0).map(|(i, _)| i)
    }
}

/// Empirical model. The initial state is the most visited state at step 0
/// (state 0 for an empty dataset).
pub fn estimate_model(data: &EpisodeDataset) -> Result<EmpiricalModel> {
    let (s_n, a_n, h_n) = (data.num_states(), data.num_actions(), data.horizon());
    let initial = (0..s_n).fold(0, |best, s| {
        if data.state_visits(0, s) > data.state_visits(0, best) {
            s
        } else {
            best
        }
    });
    let uniform = 1.0 / s_n as f64;
    let mut transitions = Vec::with_capacity(h_n * s_n * a_n * s_n);
    let mut rewards = Vec::with_capacity(h_n * s_n * a_n);
    let mut counts = Vec::with_capacity(h_n * s_n * a_n);
    for h in 0..h_n {
        for s in 0..s_n {
            for a in 0..a_n {
                let n = data.count(h, s, a);
                counts.push(n);
                if n == 0 {
                    transitions.extend(std::iter::repeat_n(uniform, s_n));
                    rewards.push(0.0);
                } else {
                    let nf = n as f64;
                    transitions.extend(data.next_counts(h, s, a).iter().map(|&c| c as f64 / nf));
                    rewards.push((data.reward_sum(h, s, a) / nf).clamp(0.0, 1.0));
                }
            }
        }
    }
    let model = TabularMdp::new(
        s_n,
        a_n,
        h_n,
        initial,
        transitions,
        rewards,
        vec![RewardFamily::Point; h_n * s_n * a_n],
    )?;
    Ok(EmpiricalModel { model, counts })
}

/// Empirical state visitation frequencies `w_hat[h][s]`.
pub fn estimate_reference(data: &EpisodeDataset) -> Result<Vec<Vec<f64>>> {
    if data.episodes() == 0 {
        return Err(Error::EmptyDataset("reference visitations need at least one episode"));
    }
    let n = data.episodes() as f64;
    Ok((0..data.horizon())
        .map(|h| {
            (0..data.num_states())
                .map(|s| data.state_visits(h, s) as f64 / n)
                .collect()
        })
        .collect())
}

/// Average return per episode.
pub fn mean_return(data: &EpisodeDataset) -> Result<f64> {
    if data.episodes() == 0 {
        return Err(Error::EmptyDataset("mean return needs at least one episode"));
    }
    Ok(data.total_reward() / data.episodes() as f64)
}

fn masked<T: Scalar>(mut v: Vec<T>, mask: Option<&[bool]>, num_actions: usize) -> Vec<T> {
    if let Some(keep) = mask {
        let per = v.len() / keep.len();
        debug_assert!(per == 1 || per == num_actions);
        for (i, x) in v.iter_mut().enumerate() {
            if !keep[i / per] {
                *x = T::zero();
            }
        }
    }
    v
}

/// Step-`h` direction `M_h((pi_h - pibar_h) w_ref_h + pi_h delta_h)` in `R^{SA}`.
pub fn step_direction<T: Scalar>(
    pi: &Policy<T>,
    pibar: &Policy<T>,
    h: usize,
    w_ref: &[T],
    delta: &[T],
    mask: Option<&[bool]>,
) -> Vec<T> {
    let a = pi.apply(h, w_ref);
    let b = pibar.apply(h, w_ref);
    let c = pi.apply(h, delta);
    let v = a.iter().zip(&b).zip(&c).map(|((&x, &y), &z)| x - y + z).collect();
    masked(v, mask, pi.num_actions())
}

/// `delta[0] = 0`, `delta[h+1] = M_{h+1}(P_h (pi_h - pibar_h) w_ref_h + P_h pi_h delta_h)`.
///
/// `masks[h][s]` marks kept states at step `h`; with no masks every state
/// is kept. Returns `H + 1` vectors.
pub fn delta_recursion<T: Scalar>(
    model: &TabularMdp<T>,
    pi: &Policy<T>,
    pibar: &Policy<T>,
    w_ref: &[Vec<T>],
    masks: Option<&[Vec<bool>]>,
) -> Result<Vec<Vec<T>>> {
    pi.check_compatible(model)?;
    pibar.check_compatible(model)?;
    check_dim("reference visitation steps", model.horizon(), w_ref.len())?;
    if let Some(m) = masks {
        check_dim("mask steps", model.horizon(), m.len())?;
    }
    let s_n = model.num_states();
    let mut deltas = vec![vec![T::zero(); s_n]];
    for h in 0..model.horizon() {
        let inner = step_direction(pi, pibar, h, &w_ref[h], &deltas[h], None);
        let next = model.push_forward(h, &inner);
        let mask = masks.and_then(|m| m.get(h + 1)).map(Vec::as_slice);
        deltas.push(masked(next, mask, model.num_actions()));
    }
    Ok(deltas)
}

/// `sum_h <r_h, pi_h delta_h> + <r_h, (pi_h - pibar_h) w_ref_h>` with the
/// rewards of `model`.
pub fn d_hat<T: Scalar>(
    model: &TabularMdp<T>,
    pi: &Policy<T>,
    pibar: &Policy<T>,
    delta: &[Vec<T>],
    w_ref: &[Vec<T>],
) -> T {
    (0..model.horizon())
        .map(|h| {
            let dir = step_direction(pi, pibar, h, &w_ref[h], &delta[h], None);
            dir.iter().zip(model.rewards_at(h)).map(|(&x, &r)| x * r).sum::<T>()
        })
        .sum()
}

/// `V_hat = D_hat + V_bar`.
pub fn off_policy_value(d_hat: f64, v_bar: f64) -> f64 {
    d_hat + v_bar
}

/// Difference estimates of a policy set against one reference.
#[derive(Clone, Debug)]
pub struct DifferenceEstimate {
    pub reference: usize,
    pub w_ref: Vec<Vec<f64>>,
    /// `deltas[i][h]` for candidate `i`.
    pub deltas: Vec<Vec<Vec<f64>>>,
    pub d_hat: Vec<f64>,
}

impl DifferenceEstimate {
    /// Index of the largest `D_hat` (lowest index among ties).
    pub fn argmax(&self) -> usize {
        self.d_hat
            .iter()
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, &d)| if d > acc.1 { (i, d) } else { acc },
            )
            .0
    }
}

/// Runs the recursion and `D_hat` for every candidate in parallel.
pub fn estimate_differences(
    model: &TabularMdp<f64>,
    policies: &[Policy<f64>],
    reference: usize,
    w_ref: Vec<Vec<f64>>,
    masks: Option<&[Vec<bool>]>,
) -> Result<DifferenceEstimate> {
    let pibar = policies
        .get(reference)
        .ok_or_else(|| Error::Config(format!("reference index {reference} out of range")))?;
    let per: Vec<(Vec<Vec<f64>>, f64)> = policies
        .par_iter()
        .map(|pi| {
            let delta = delta_recursion(model, pi, pibar, &w_ref, masks)?;
            let d = d_hat(model, pi, pibar, &delta, &w_ref);
            Ok((delta, d))
        })
        .collect::<Result<_>>()?;
    let (deltas, d_hat) = per.into_iter().unzip();
    Ok(DifferenceEstimate {
        reference,
        w_ref,
        deltas,
        d_hat,
    })
}

/// Unit-constant right-hand sides of the sample-size conditions:
/// `K_mu = max_pi sum_h H^2 ||phi_pi_h - phi_bar_h||^2_{diag(mu_h)^-1} / max(eps, Delta)^2`
/// and `K_bar = max_pi U(pi, pibar) / max(eps, Delta)^2`.
///
/// `mu[h]` is the exploration occupancy at step `h`.
pub fn sufficient_sample_sizes(
    mdp: &TabularMdp<f64>,
    policies: &[Policy<f64>],
    pibar: &Policy<f64>,
    mu: &[Vec<f64>],
    eps: f64,
) -> Result<(f64, f64)> {
    check_dim("exploration occupancy steps", mdp.horizon(), mu.len())?;
    let gaps = gap_profile(mdp, policies, 1e-12)?;
    let bar = crate::mdp::forward_visitations(mdp, pibar)?;
    let h2 = (mdp.horizon() * mdp.horizon()) as f64;
    let mut k_mu = 0.0f64;
    let mut k_bar = 0.0f64;
    for (i, pi) in policies.iter().enumerate() {
        let d = gaps.gaps[i].max(eps);
        let d2 = d * d;
        let vis = crate::mdp::forward_visitations(mdp, pi)?;
        let mut norm = 0.0;
        for h in 0..mdp.horizon() {
            let u: Vec<f64> = vis.phi[h].iter().zip(&bar.phi[h]).map(|(a, b)| a - b).collect();
            norm += crate::design::design_value(&mu[h], None, &u);
        }
        let u_term = compute_u(mdp, pi, pibar)?.total;
        if norm > 0.0 {
            k_mu = k_mu.max(h2 * norm / d2);
        }
        if u_term > 0.0 {
            k_bar = k_bar.max(u_term / d2);
        }
    }
    Ok((k_mu, k_bar))
}
