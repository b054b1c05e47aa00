//! Instance zoo: the two-step four-state hard instance, random tabular MDPs,
//! contextual bandits lifted to MDPs and action-independent MDPs.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::mdp::{Policy, RewardFamily, TabularMdp};
use crate::scalar::Scalar;

/// Two-step instance with states `s1..s4` (indices 0..3) and actions
/// `a1..a3` (indices 0..2).
///
/// At step 0 in `s1`, `a1` moves to `s2, s3, s4` with probabilities
/// `1 - 3 eps, eps1, eps2`, `a2` moves to `s3` and `a3` to `s4`. Every other
/// transition stays put. Step-1 rewards are 1 at `(s3, a1)` and `(s4, a2)`,
/// plus 1 at `(s1, a1)` on step 0 when `step1_reward` is set.
///
/// Returns the model and `[pi1, pi2]` where `pi1` always plays `a1` and
/// `pi2` plays `a2` in `s3, s4`.
pub fn figure1<T: Scalar>(eps: T, eps1: T, eps2: T, step1_reward: bool) -> Result<(TabularMdp<T>, Vec<Policy<T>>)> {
    let three = T::from_f64_lossy(3.0);
    let stay = T::one() - three * eps;
    let tol = T::stochastic_tol();
    if stay < T::zero() || eps1 < T::zero() || eps2 < T::zero() {
        return Err(Error::Config(format!(
            "figure-1 probabilities must be nonnegative (1-3eps={stay}, eps1={eps1}, eps2={eps2})"
        )));
    }
    if (stay + eps1 + eps2 - T::one()).abs() > tol {
        return Err(Error::Config(format!(
            "figure-1 probabilities 1-3eps, eps1, eps2 sum to {}",
            stay + eps1 + eps2
        )));
    }
    let mdp = TabularMdp::from_fn(
        4,
        3,
        2,
        0,
        RewardFamily::Point,
        |h, s, a, next| {
            let branch = match (h, s, a) {
                (0, 0, 0) => Some([T::zero(), stay, eps1, eps2]),
                (0, 0, 1) => Some([T::zero(), T::zero(), T::one(), T::zero()]),
                (0, 0, 2) => Some([T::zero(), T::zero(), T::zero(), T::one()]),
                _ => None,
            };
            match branch {
                Some(row) => row[next],
                None if next == s => T::one(),
                None => T::zero(),
            }
        },
        |h, s, a| match (h, s, a) {
            (1, 2, 0) | (1, 3, 1) => T::one(),
            (0, 0, 0) if step1_reward => T::one(),
            _ => T::zero(),
        },
    )?;
    let pi1 = Policy::constant(4, 3, 2, 0)?;
    let pi2 = Policy::from_fn(4, 3, 2, |_, s| if s >= 2 { 1 } else { 0 })?;
    Ok((mdp, vec![pi1, pi2]))
}

/// The instance `M` with `(eps1, eps2) = (2 eps, eps)`, where `pi1` is optimal.
pub fn figure1_m<T: Scalar>(eps: T, step1_reward: bool) -> Result<(TabularMdp<T>, Vec<Policy<T>>)> {
    figure1(eps, eps + eps, eps, step1_reward)
}

/// The instance `M'` with `(eps1, eps2) = (eps, 2 eps)`, where `pi2` is optimal.
pub fn figure1_m_prime<T: Scalar>(eps: T, step1_reward: bool) -> Result<(TabularMdp<T>, Vec<Policy<T>>)> {
    figure1(eps, eps, eps + eps, step1_reward)
}

/// Flat Dirichlet(1, ..., 1) draw.
pub fn random_simplex<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    let mut probs: Vec<f64> = draws.iter().map(|x| x / total).collect();
    // absorb rounding so rows sum to one as tightly as possible
    let drift: f64 = 1.0 - probs.iter().sum::<f64>();
    let last = probs.len() - 1;
    probs[last] = (probs[last] + drift).max(0.0);
    probs
}

/// Random MDP with Dirichlet transition rows and uniform Bernoulli means.
pub fn random_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> Result<TabularMdp<f64>> {
    let cells = horizon * num_states * num_actions;
    let mut transitions = Vec::with_capacity(cells * num_states);
    for _ in 0..cells {
        transitions.extend(random_simplex(rng, num_states));
    }
    let rewards = (0..cells).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(
        num_states,
        num_actions,
        horizon,
        0,
        transitions,
        rewards,
        vec![RewardFamily::Bernoulli; cells],
    )
}

/// Random MDP whose transition rows do not depend on the action.
pub fn random_action_independent_mdp<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> Result<TabularMdp<f64>> {
    let cells = horizon * num_states * num_actions;
    let mut transitions = Vec::with_capacity(cells * num_states);
    for _ in 0..horizon * num_states {
        let row = random_simplex(rng, num_states);
        for _ in 0..num_actions {
            transitions.extend_from_slice(&row);
        }
    }
    let rewards = (0..cells).map(|_| rng.random::<f64>()).collect();
    TabularMdp::new(
        num_states,
        num_actions,
        horizon,
        0,
        transitions,
        rewards,
        vec![RewardFamily::Bernoulli; cells],
    )
}

pub fn random_deterministic_policy<R: Rng + ?Sized, T: Scalar>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> Policy<T> {
    Policy::from_fn(num_states, num_actions, horizon, |_, _| {
        rng.random_range(0..num_actions)
    })
    .expect("sampled actions are in range")
}

/// Random MDP with `num_policies` deterministic candidates in which
/// candidate 0 is optimal and the runner-up trails it by exactly `gap`.
///
/// Candidate 0 alone plays its step-0 action `a*` at the initial state; the
/// mean reward of `(0, s0, a*)` is 1 and the other step-0 rewards at `s0` are
/// set so the best rival lands `gap` below. Draws that would need a reward
/// outside `[0, 1]` are rejected and redrawn.
pub fn planted_gap<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_policies: usize,
    gap: f64,
) -> Result<(TabularMdp<f64>, Vec<Policy<f64>>)> {
    if num_actions < 2 || num_policies < 2 || horizon < 2 {
        return Err(Error::Config(
            "planted gap needs two actions, two policies and two steps".into(),
        ));
    }
    if !(gap > 0.0 && gap < 1.0) {
        return Err(Error::Config(format!("gap must lie in (0, 1), got {gap}")));
    }
    for _ in 0..10_000 {
        let base = random_mdp(rng, num_states, num_actions, horizon)?;
        let mut rewards = base.rewards_raw().to_vec();
        let s0 = base.initial_state();
        for a in 0..num_actions {
            rewards[base.sa_index(s0, a)] = 0.0;
        }
        let stripped = base.with_rewards(rewards.clone())?;
        let star_action = rng.random_range(0..num_actions);
        let mut policies = Vec::with_capacity(num_policies);
        for i in 0..num_policies {
            let mut table: Vec<usize> = (0..horizon * num_states)
                .map(|_| rng.random_range(0..num_actions))
                .collect();
            table[s0] = if i == 0 {
                star_action
            } else {
                (star_action + rng.random_range(1..num_actions)) % num_actions
            };
            policies.push(Policy::deterministic(num_states, num_actions, horizon, table)?);
        }
        let tail: Vec<f64> = policies
            .iter()
            .map(|p| crate::mdp::value_functions(&stripped, p).map(|v| v.v0))
            .collect::<Result<_>>()?;
        let mut best_rival = vec![f64::NEG_INFINITY; num_actions];
        for (p, &c) in policies.iter().zip(&tail).skip(1) {
            let a = p.action(0, s0).expect("deterministic");
            best_rival[a] = best_rival[a].max(c);
        }
        let mut ok = true;
        for a in 0..num_actions {
            let r = if a == star_action {
                1.0
            } else if best_rival[a].is_finite() {
                1.0 + tail[0] - gap - best_rival[a]
            } else {
                0.0
            };
            ok &= (0.0..=1.0).contains(&r);
            rewards[base.sa_index(s0, a)] = r;
        }
        if ok {
            return Ok((base.with_rewards(rewards)?, policies));
        }
    }
    Err(Error::Config("could not plant the requested gap".into()))
}

/// Contextual bandit with context law `mu` and mean rewards `rewards[c][a]`,
/// written as a two-step MDP: state 0 is a dummy start whose step-0
/// transition draws context `c` as state `c + 1`; step-1 rewards are the
/// bandit rewards.
pub fn contextual_bandit(mu: &[f64], rewards: &[Vec<f64>]) -> Result<TabularMdp<f64>> {
    if mu.is_empty() || rewards.len() != mu.len() {
        return Err(Error::Config(
            "context law and reward table must be nonempty and aligned".into(),
        ));
    }
    let num_actions = rewards[0].len();
    if num_actions == 0 || rewards.iter().any(|r| r.len() != num_actions) {
        return Err(Error::Config("reward rows must share a positive action count".into()));
    }
    let num_states = mu.len() + 1;
    TabularMdp::from_fn(
        num_states,
        num_actions,
        2,
        0,
        RewardFamily::Bernoulli,
        |h, s, _, next| match (h, s) {
            (0, 0) => {
                if next == 0 {
                    0.0
                } else {
                    mu[next - 1]
                }
            }
            _ if next == s => 1.0,
            _ => 0.0,
        },
        |h, s, a| if h == 1 && s > 0 { rewards[s - 1][a] } else { 0.0 },
    )
}

/// Policy on a lifted contextual bandit playing `rule[c]` in context `c`.
pub fn context_policy<T: Scalar>(num_actions: usize, rule: &[usize]) -> Result<Policy<T>> {
    Policy::from_fn(rule.len() + 1, num_actions, 2, |h, s| {
        if h == 1 && s > 0 {
            rule[s - 1]
        } else {
            0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{forward_visitations, value_functions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn figure1_visitations_and_values() {
        let (mdp, pis) = figure1_m::<f64>(0.1, true).unwrap();
        let w = forward_visitations(&mdp, &pis[0]).unwrap().w;
        assert!((w[1][1] - 0.7).abs() < 1e-12);
        assert!((w[1][2] - 0.2).abs() < 1e-12);
        assert!((w[1][3] - 0.1).abs() < 1e-12);
        let v1 = value_functions(&mdp, &pis[0]).unwrap().v0;
        let v2 = value_functions(&mdp, &pis[1]).unwrap().v0;
        assert!((v1 - 1.2).abs() < 1e-12);
        assert!((v2 - 1.1).abs() < 1e-12);
        let (mp, _) = figure1_m_prime::<f64>(0.1, true).unwrap();
        assert!((value_functions(&mp, &pis[1]).unwrap().v0 - 1.2).abs() < 1e-12);
    }

    #[test]
    fn figure1_rejects_invalid_probabilities() {
        assert!(figure1::<f64>(0.4, 0.0, 0.2, false).is_err());
        assert!(figure1::<f64>(0.1, 0.25, 0.1, false).is_err());
        assert!(figure1::<f64>(0.0, 0.0, 0.0, false).is_ok());
    }

    #[test]
    fn random_instances_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp(&mut rng, 5, 3, 4).unwrap();
        assert_eq!(mdp.horizon(), 4);
        let ai = random_action_independent_mdp(&mut rng, 4, 3, 3).unwrap();
        assert_eq!(ai.action_dependence(), 0.0);
    }

    #[test]
    fn contextual_lift_draws_contexts() {
        let mdp = contextual_bandit(&[0.3, 0.7], &[vec![0.1, 0.9], vec![0.5, 0.2]]).unwrap();
        let pi = context_policy::<f64>(2, &[1, 0]).unwrap();
        let v = value_functions(&mdp, &pi).unwrap().v0;
        assert!((v - (0.3 * 0.9 + 0.7 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn planted_gap_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let (mdp, pis) = planted_gap(&mut rng, 5, 3, 3, 6, 0.2).unwrap();
            let g = crate::mdp::gap_profile(&mdp, &pis, 1e-12).unwrap();
            assert_eq!(g.best, 0);
            assert!((g.delta_min - 0.2).abs() < 1e-12, "{}", g.delta_min);
        }
        assert!(planted_gap(&mut rng, 5, 1, 3, 6, 0.2).is_err());
    }
}
