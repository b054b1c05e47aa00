use crate::error::{Error, Result};
use crate::mdp::model::TabularMdp;
use crate::mdp::policy::Policy;
use crate::scalar::Scalar;

/// State visitations `w[h]` for `h = 0..=H` (the last entry is the
/// terminal distribution) and state-action visitations `phi[h]` for `h < H`.
#[derive(Clone, Debug, PartialEq)]
pub struct VisitationProfile<T> {
    pub w: Vec<Vec<T>>,
    pub phi: Vec<Vec<T>>,
}

/// `v[h]` for `h = 0..=H` with `v[H] = 0`, `q[h]` laid out `[s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueProfile<T> {
    pub v: Vec<Vec<T>>,
    pub q: Vec<Vec<T>>,
    pub v0: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UTerm<T> {
    pub per_step: Vec<T>,
    pub total: T,
}

/// Gaps of every policy in a candidate set relative to the best one.
#[derive(Clone, Debug, PartialEq)]
pub struct GapProfile<T> {
    pub values: Vec<T>,
    pub gaps: Vec<T>,
    pub delta_min: T,
    pub best: usize,
    pub unique_best: bool,
}

pub fn forward_visitations<T: Scalar>(mdp: &TabularMdp<T>, policy: &Policy<T>) -> Result<VisitationProfile<T>> {
    policy.check_compatible(mdp)?;
    let mut w0 = vec![T::zero(); mdp.num_states()];
    w0[mdp.initial_state()] = T::one();
    Ok(visitations_from(mdp, policy, 0, w0))
}

/// Rolls a state distribution `start` forward from step `from`.
/// Entry `k` of the result corresponds to step `from + k`.
fn visitations_from<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &Policy<T>,
    from: usize,
    start: Vec<T>,
) -> VisitationProfile<T> {
    let mut w = vec![start];
    let mut phi = Vec::with_capacity(mdp.horizon() - from);
    for h in from..mdp.horizon() {
        let cur = policy.apply(h, w.last().expect("nonempty"));
        w.push(mdp.push_forward(h, &cur));
        phi.push(cur);
    }
    VisitationProfile { w, phi }
}

pub fn value_functions<T: Scalar>(mdp: &TabularMdp<T>, policy: &Policy<T>) -> Result<ValueProfile<T>> {
    policy.check_compatible(mdp)?;
    let (s_n, a_n, horizon) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let mut v = vec![vec![T::zero(); s_n]; horizon + 1];
    let mut q = vec![Vec::new(); horizon];
    for h in (0..horizon).rev() {
        let mut qh = mdp.expected_next(h, &v[h + 1]);
        for (qsa, &r) in qh.iter_mut().zip(mdp.rewards_at(h)) {
            *qsa += r;
        }
        for s in 0..s_n {
            v[h][s] = policy.average(h, s, &qh[s * a_n..(s + 1) * a_n]);
        }
        q[h] = qh;
    }
    let v0 = v[0][mdp.initial_state()];
    Ok(ValueProfile { v, q, v0 })
}

/// `U(pi, pibar)`: squared Q^pi disagreement along pibar's state visitations.
///
/// For stochastic policies the Q-values are averaged over each policy's
/// action distribution before squaring.
pub fn compute_u<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy<T>, pibar: &Policy<T>) -> Result<UTerm<T>> {
    let values = value_functions(mdp, pi)?;
    let reference = forward_visitations(mdp, pibar)?;
    Ok(u_from_parts(mdp.num_actions(), pi, pibar, &values.q, &reference.w))
}

pub(crate) fn u_from_parts<T: Scalar>(
    num_actions: usize,
    pi: &Policy<T>,
    pibar: &Policy<T>,
    q: &[Vec<T>],
    w_ref: &[Vec<T>],
) -> UTerm<T> {
    let per_step: Vec<T> = q
        .iter()
        .enumerate()
        .map(|(h, qh)| {
            w_ref[h]
                .iter()
                .enumerate()
                .filter(|&(s, &ws)| ws != T::zero() && !pi.agrees_at(pibar, h, s))
                .map(|(s, &ws)| {
                    let row = &qh[s * num_actions..(s + 1) * num_actions];
                    let diff = pi.average(h, s, row) - pibar.average(h, s, row);
                    ws * diff * diff
                })
                .sum()
        })
        .collect();
    let total = per_step.iter().copied().sum();
    UTerm { per_step, total }
}

/// `sum_h E_{s ~ w^pibar_h}[Q^pi_h(s, pi) - Q^pi_h(s, pibar)]`, which equals
/// `V^pi - V^pibar`.
pub fn performance_difference<T: Scalar>(mdp: &TabularMdp<T>, pi: &Policy<T>, pibar: &Policy<T>) -> Result<T> {
    let values = value_functions(mdp, pi)?;
    let reference = forward_visitations(mdp, pibar)?;
    let a_n = mdp.num_actions();
    let mut total = T::zero();
    for (h, qh) in values.q.iter().enumerate() {
        for (s, &ws) in reference.w[h].iter().enumerate() {
            let row = &qh[s * a_n..(s + 1) * a_n];
            total += ws * (pi.average(h, s, row) - pibar.average(h, s, row));
        }
    }
    Ok(total)
}

/// Values and gaps of a candidate set. Values within `tie_tol` of the best
/// count as ties, in which case `delta_min` is zero.
pub fn gap_profile<T: Scalar>(mdp: &TabularMdp<T>, policies: &[Policy<T>], tie_tol: T) -> Result<GapProfile<T>> {
    if policies.is_empty() {
        return Err(Error::Config("policy set is empty".into()));
    }
    let values = policies
        .iter()
        .map(|p| value_functions(mdp, p).map(|v| v.v0))
        .collect::<Result<Vec<T>>>()?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    let v_star = values[best];
    let ties = values
        .iter()
        .enumerate()
        .filter(|&(i, &v)| i != best && v_star - v <= tie_tol)
        .count();
    let unique_best = ties == 0;
    let delta_min = if unique_best {
        values
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != best)
            .map(|(_, &v)| v_star - v)
            .fold(None, |acc: Option<T>, g| Some(acc.map_or(g, |m| m.min(g))))
            .unwrap_or(T::zero())
    } else {
        T::zero()
    };
    let gaps = values.iter().map(|&v| (v_star - v).max(delta_min)).collect();
    Ok(GapProfile {
        values,
        gaps,
        delta_min,
        best,
        unique_best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::model::RewardFamily;

    fn two_step() -> TabularMdp<f64> {
        // action 0 stays, action 1 moves to state 1; reward for being in state 1
        TabularMdp::from_fn(
            2,
            2,
            2,
            0,
            RewardFamily::Point,
            |_, s, a, next| {
                let target = if a == 1 { 1 } else { s };
                if next == target {
                    1.0
                } else {
                    0.0
                }
            },
            |_, s, _| s as f64,
        )
        .unwrap()
    }

    #[test]
    fn forward_and_backward_agree() {
        let mdp = two_step();
        let pi = Policy::uniform(2, 2, 2);
        let vis = forward_visitations(&mdp, &pi).unwrap();
        assert_eq!(vis.w[1], vec![0.5, 0.5]);
        let via_phi: f64 = (0..2)
            .map(|h| {
                vis.phi[h]
                    .iter()
                    .zip(mdp.rewards_at(h))
                    .map(|(p, r)| p * r)
                    .sum::<f64>()
            })
            .sum();
        let vals = value_functions(&mdp, &pi).unwrap();
        assert!((vals.v0 - via_phi).abs() < 1e-15);
        assert!((vals.v0 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn u_vanishes_on_identical_policies() {
        let mdp = two_step();
        let pi = Policy::constant(2, 2, 2, 1).unwrap();
        assert_eq!(compute_u(&mdp, &pi, &pi).unwrap().total, 0.0);
        assert_eq!(performance_difference(&mdp, &pi, &pi).unwrap(), 0.0);
    }

    #[test]
    fn gap_profile_ties_zero_delta_min() {
        let mdp = two_step();
        let stay = Policy::constant(2, 2, 2, 0).unwrap();
        let go = Policy::constant(2, 2, 2, 1).unwrap();
        let g = gap_profile(&mdp, &[stay.clone(), go.clone()], 1e-12).unwrap();
        assert_eq!(g.best, 1);
        assert!((g.delta_min - 1.0).abs() < 1e-15);
        assert_eq!(g.gaps, vec![1.0, 1.0]);
        let tied = gap_profile(&mdp, &[go.clone(), stay, go], 1e-12).unwrap();
        assert!(!tied.unique_best);
        assert_eq!(tied.delta_min, 0.0);
        assert_eq!(tied.gaps, vec![0.0, 1.0, 0.0]);
    }
}
