use crate::error::{Error, Result};
use crate::mdp::{forward_visitations, gap_profile, Policy, TabularMdp};

fn deterministic_actions(policy: &Policy<f64>) -> Result<&[usize]> {
    policy
        .actions()
        .ok_or_else(|| Error::Unsupported("closed-form designs require deterministic policies".into()))
}

/// `max_{pi, pi'} 4 * sum_c mu_c * 1{pi(c) != pi'(c)}` for a contextual
/// bandit lifted by [`crate::instances::contextual_bandit`] (context `c` is
/// state `c + 1` at the second step).
///
/// Equals the min-max design value when every context sees at most two
/// distinct actions across the set; with more it is only a lower bound.
pub fn closed_form_contextual(mu: &[f64], policies: &[Policy<f64>]) -> Result<f64> {
    let rules = policies
        .iter()
        .map(|p| {
            if p.num_states() != mu.len() + 1 || p.horizon() != 2 {
                return Err(Error::Config(
                    "policies must act on the lifted contextual bandit".into(),
                ));
            }
            deterministic_actions(p)
        })
        .collect::<Result<Vec<_>>>()?;
    let s_n = mu.len() + 1;
    let mut best = 0.0f64;
    for (i, a) in rules.iter().enumerate() {
        for b in &rules[i + 1..] {
            let mass: f64 = (0..mu.len())
                .filter(|&c| a[s_n + c + 1] != b[s_n + c + 1])
                .map(|c| mu[c])
                .sum();
            best = best.max(4.0 * mass);
        }
    }
    Ok(best)
}

/// Per-step `max_pi 4 * E_{s ~ w_star_h} 1{pi_h(s) != pi_star_h(s)}` for
/// MDPs whose transitions do not depend on the action.
///
/// Equals the min-max design value of the differences `phi_star - phi_pi`
/// when each state has at most one action besides `pi_star`'s across the
/// set; otherwise it is a lower bound.
pub fn closed_form_action_independent(mdp: &TabularMdp<f64>, policies: &[Policy<f64>]) -> Result<Vec<f64>> {
    let dep = mdp.action_dependence();
    if dep > 1e-12 {
        return Err(Error::Unsupported(format!(
            "transitions depend on the action (max deviation {dep:e})"
        )));
    }
    let rules = policies.iter().map(deterministic_actions).collect::<Result<Vec<_>>>()?;
    let gaps = gap_profile(mdp, policies, 1e-12)?;
    let star = rules[gaps.best];
    let w = forward_visitations(mdp, &policies[gaps.best])?.w;
    let s_n = mdp.num_states();
    Ok((0..mdp.horizon())
        .map(|h| {
            rules
                .iter()
                .map(|r| {
                    4.0 * (0..s_n)
                        .filter(|&s| r[h * s_n + s] != star[h * s_n + s])
                        .map(|s| w[h][s])
                        .sum::<f64>()
                })
                .fold(0.0, f64::max)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{context_policy, figure1_m};
    use crate::mdp::RewardFamily;

    #[test]
    fn contextual_values() {
        let mu = [0.3, 0.7];
        let a = context_policy(2, &[0, 0]).unwrap();
        let b = context_policy(2, &[1, 0]).unwrap();
        let c = context_policy(2, &[1, 1]).unwrap();
        assert!((closed_form_contextual(&mu, &[a.clone(), b]).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(closed_form_contextual(&mu, &[a.clone(), a.clone()]).unwrap(), 0.0);
        assert!((closed_form_contextual(&mu, &[a, c]).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn stochastic_policies_rejected() {
        let pi = Policy::uniform(3, 2, 2);
        assert!(matches!(
            closed_form_contextual(&[0.5, 0.5], &[pi]),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn action_independent_values() {
        // four equally likely states drawn at step 0, reward for action 1 in state 0
        let mdp = TabularMdp::from_fn(
            4,
            2,
            2,
            0,
            RewardFamily::Point,
            |h, s, _, next| match h {
                0 => 0.25,
                _ => (next == s) as u8 as f64,
            },
            |h, s, a| if h == 1 && s == 0 && a == 1 { 1.0 } else { 0.0 },
        )
        .unwrap();
        let star = Policy::from_fn(4, 2, 2, |h, s| (h == 1 && s == 0) as usize).unwrap();
        let one_off = Policy::constant(4, 2, 2, 0).unwrap();
        let v = closed_form_action_independent(&mdp, &[star.clone(), one_off]).unwrap();
        assert_eq!(v, vec![0.0, 1.0]);
        let v = closed_form_action_independent(&mdp, &[star.clone(), star.clone()]).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        let everywhere = Policy::from_fn(4, 2, 2, |h, s| 1 - (h == 1 && s == 0) as usize).unwrap();
        let v = closed_form_action_independent(&mdp, &[star, everywhere]).unwrap();
        assert_eq!(v[1], 4.0);
    }

    #[test]
    fn action_dependent_rejected() {
        let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
        assert!(matches!(
            closed_form_action_independent(&mdp, &pis),
            Err(Error::Unsupported(_))
        ));
    }
}
