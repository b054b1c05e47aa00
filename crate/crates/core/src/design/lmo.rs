use crate::mdp::{Policy, TabularMdp};
use crate::scalar::Scalar;

/// Index of the largest entry, keeping the lowest index among near-ties.
fn argmax_low<T: Scalar>(values: &[T]) -> (usize, T) {
    let scale = values.iter().fold(T::one(), |m, &v| m.max(v.abs()));
    let slack = T::from_f64_lossy(1e-12) * scale;
    let mut best = 0;
    for (a, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] + slack {
            best = a;
        }
    }
    (best, values[best])
}

/// Deterministic policy maximising `sum_{s,a} weight(s,a) * phi_h^pi(s,a)`
/// over all policies, with its step-`h` visitation and objective value.
///
/// Planning runs backwards from step `h`; steps after `h` play action 0.
pub fn lmo_best_visitation_policy<T: Scalar>(mdp: &TabularMdp<T>, h: usize, weight: &[T]) -> (Policy<T>, Vec<T>, T) {
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let mut actions = vec![0usize; mdp.horizon() * s_n];
    let mut v = vec![T::zero(); s_n];
    for s in 0..s_n {
        let (a, val) = argmax_low(&weight[s * a_n..(s + 1) * a_n]);
        actions[h * s_n + s] = a;
        v[s] = val;
    }
    for k in (0..h).rev() {
        let q = mdp.expected_next(k, &v);
        for s in 0..s_n {
            let (a, val) = argmax_low(&q[s * a_n..(s + 1) * a_n]);
            actions[k * s_n + s] = a;
            v[s] = val;
        }
    }
    let policy = Policy::deterministic(s_n, a_n, mdp.horizon(), actions).expect("planned actions are in range");
    let phi = step_visitation(mdp, &policy, h);
    let value = phi.iter().zip(weight).map(|(&p, &w)| p * w).sum();
    (policy, phi, value)
}

/// `phi_h^pi` alone.
pub fn step_visitation<T: Scalar>(mdp: &TabularMdp<T>, policy: &Policy<T>, h: usize) -> Vec<T> {
    let mut w = vec![T::zero(); mdp.num_states()];
    w[mdp.initial_state()] = T::one();
    for k in 0..h {
        w = mdp.push_forward(k, &policy.apply(k, &w));
    }
    policy.apply(h, &w)
}

/// Maximum reachability `W*_h(s) = max_pi w_h^pi(s)` for `h = 0..H`, as `[h][s]`.
pub fn max_reachability<T: Scalar>(mdp: &TabularMdp<T>) -> Vec<Vec<T>> {
    let s_n = mdp.num_states();
    let mut out = vec![vec![T::zero(); s_n]; mdp.horizon()];
    out[0][mdp.initial_state()] = T::one();
    for h in 1..mdp.horizon() {
        for target in 0..s_n {
            let (_, prob) = reach_plan(mdp, h, target);
            out[h][target] = prob;
        }
    }
    out
}

/// Policy maximising the probability of being in `target` at step `h`, with
/// that probability. Steps from `h` onwards play action 0.
pub fn reach_policy<T: Scalar>(mdp: &TabularMdp<T>, h: usize, target: usize) -> (Policy<T>, T) {
    let (actions, prob) = reach_plan(mdp, h, target);
    let policy = Policy::deterministic(mdp.num_states(), mdp.num_actions(), mdp.horizon(), actions)
        .expect("planned actions are in range");
    (policy, prob)
}

fn reach_plan<T: Scalar>(mdp: &TabularMdp<T>, h: usize, target: usize) -> (Vec<usize>, T) {
    let (s_n, a_n) = (mdp.num_states(), mdp.num_actions());
    let mut actions = vec![0usize; mdp.horizon() * s_n];
    let mut v = vec![T::zero(); s_n];
    v[target] = T::one();
    for k in (0..h).rev() {
        let q = mdp.expected_next(k, &v);
        for s in 0..s_n {
            let (a, val) = argmax_low(&q[s * a_n..(s + 1) * a_n]);
            actions[k * s_n + s] = a;
            v[s] = val;
        }
    }
    (actions, v[mdp.initial_state()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{figure1_m, random_mdp};
    use crate::mdp::all_deterministic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn figure1_single_cell_weight() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let mut weight = vec![0.0; 12];
        weight[2 * 3 + 1] = 1.0;
        let (pi, phi, value) = lmo_best_visitation_policy(&mdp, 1, &weight);
        assert_eq!(pi.action(0, 0), Some(1));
        assert_eq!(pi.action(1, 2), Some(1));
        assert!((value - 1.0).abs() < 1e-15);
        assert!((phi[7] - 1.0).abs() < 1e-15);
        let best = all_deterministic::<f64>(4, 3, 2, 10_000)
            .unwrap()
            .iter()
            .map(|p| step_visitation(&mdp, p, 1)[7])
            .fold(0.0, f64::max);
        assert_eq!(best, 1.0);
    }

    #[test]
    fn constant_weight_prefers_lowest_actions() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let (pi, _, value) = lmo_best_visitation_policy(&mdp, 1, &[0.5; 12]);
        assert!((value - 0.5).abs() < 1e-15);
        assert_eq!(pi.actions().unwrap(), &[0; 8]);
    }

    #[test]
    fn dp_matches_enumeration_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let (s_n, a_n, h_n) = (rng.random_range(2..=3), rng.random_range(2..=3), 3);
            let mdp = random_mdp(&mut rng, s_n, a_n, h_n).unwrap();
            let h = rng.random_range(0..h_n);
            let weight: Vec<f64> = (0..s_n * a_n).map(|_| rng.random()).collect();
            let (_, _, dp) = lmo_best_visitation_policy(&mdp, h, &weight);
            let brute = all_deterministic::<f64>(s_n, a_n, h_n, 100_000)
                .unwrap()
                .iter()
                .map(|p| {
                    step_visitation(&mdp, p, h)
                        .iter()
                        .zip(&weight)
                        .map(|(x, w)| x * w)
                        .sum::<f64>()
                })
                .fold(f64::NEG_INFINITY, f64::max);
            assert!((dp - brute).abs() < 1e-12, "dp {dp} vs brute {brute}");
        }
    }

    #[test]
    fn reachability_on_figure1() {
        let (mdp, _) = figure1_m::<f64>(0.1, false).unwrap();
        let w = max_reachability(&mdp);
        assert_eq!(w[1], vec![0.0, 0.7, 1.0, 1.0]);
        let (pi, p) = reach_policy(&mdp, 1, 3);
        assert_eq!(p, 1.0);
        assert_eq!(pi.action(0, 0), Some(2));
    }
}
