use crate::error::{check_dim, Error, Result};
use crate::mdp::model::TabularMdp;
use crate::scalar::Scalar;

/// Time-indexed decision rule, stored as action distributions `[h][s][a]`.
///
/// Deterministic policies also keep their action table so that lookups and
/// equality tests do not need to scan the distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy<T> {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    probs: Vec<T>,
    actions: Option<Vec<usize>>,
}

impl<T: Scalar> Policy<T> {
    /// `actions` is laid out `[h][s]`.
    pub fn deterministic(num_states: usize, num_actions: usize, horizon: usize, actions: Vec<usize>) -> Result<Self> {
        check_dim("deterministic rules", horizon * num_states, actions.len())?;
        if let Some(&bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::Config(format!(
                "action {bad} out of range for {num_actions} actions"
            )));
        }
        let mut probs = vec![T::zero(); horizon * num_states * num_actions];
        for (cell, &a) in actions.iter().enumerate() {
            probs[cell * num_actions + a] = T::one();
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            probs,
            actions: Some(actions),
        })
    }

    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        mut rule: impl FnMut(usize, usize) -> usize,
    ) -> Result<Self> {
        let mut actions = Vec::with_capacity(horizon * num_states);
        for h in 0..horizon {
            for s in 0..num_states {
                actions.push(rule(h, s));
            }
        }
        Self::deterministic(num_states, num_actions, horizon, actions)
    }

    pub fn constant(num_states: usize, num_actions: usize, horizon: usize, action: usize) -> Result<Self> {
        Self::from_fn(num_states, num_actions, horizon, |_, _| action)
    }

    /// `probs` is laid out `[h][s][a]`; each row must sum to one.
    pub fn stochastic(num_states: usize, num_actions: usize, horizon: usize, probs: Vec<T>) -> Result<Self> {
        check_dim("stochastic rules", horizon * num_states * num_actions, probs.len())?;
        let tol = T::stochastic_tol();
        for (cell, row) in probs.chunks(num_actions).enumerate() {
            if row.iter().any(|&p| !p.is_finite() || p < -tol) {
                return Err(Error::Config(format!(
                    "negative or non-finite action probability in rule {cell}"
                )));
            }
            let total: T = row.iter().copied().sum();
            if (total - T::one()).abs() > tol {
                return Err(Error::Config(format!("action distribution {cell} sums to {total}")));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            probs,
            actions: None,
        })
    }

    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize) -> Self {
        let p = T::one() / T::from_usize(num_actions).expect("action count fits in scalar");
        Self {
            num_states,
            num_actions,
            horizon,
            probs: vec![p; horizon * num_states * num_actions],
            actions: None,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn is_deterministic(&self) -> bool {
        self.actions.is_some()
    }

    /// Action table `[h][s]` of a deterministic policy.
    pub fn actions(&self) -> Option<&[usize]> {
        self.actions.as_deref()
    }

    #[inline]
    pub fn action(&self, h: usize, s: usize) -> Option<usize> {
        self.actions.as_ref().map(|acts| acts[h * self.num_states + s])
    }

    #[inline]
    pub fn dist(&self, h: usize, s: usize) -> &[T] {
        let start = (h * self.num_states + s) * self.num_actions;
        &self.probs[start..start + self.num_actions]
    }

    #[inline]
    pub fn prob(&self, h: usize, s: usize, a: usize) -> T {
        self.dist(h, s)[a]
    }

    pub fn probs_raw(&self) -> &[T] {
        &self.probs
    }

    pub fn check_compatible(&self, mdp: &TabularMdp<T>) -> Result<()> {
        check_dim("policy states", mdp.num_states(), self.num_states)?;
        check_dim("policy actions", mdp.num_actions(), self.num_actions)?;
        check_dim("policy horizon", mdp.horizon(), self.horizon)
    }

    /// Policy matrix product: `phi(s,a) = pi_h(s)_a * w(s)`.
    pub fn apply(&self, h: usize, w: &[T]) -> Vec<T> {
        let mut phi = Vec::with_capacity(self.num_states * self.num_actions);
        for (s, &ws) in w.iter().enumerate() {
            phi.extend(self.dist(h, s).iter().map(|&p| p * ws));
        }
        phi
    }

    /// `sum_a pi_h(s)_a * values[a]`.
    #[inline]
    pub fn average(&self, h: usize, s: usize, values: &[T]) -> T {
        match self.action(h, s) {
            Some(a) => values[a],
            None => self.dist(h, s).iter().zip(values).map(|(&p, &v)| p * v).sum(),
        }
    }

    /// Whether the two policies prescribe the same distribution at `(h, s)`.
    pub fn agrees_at(&self, other: &Self, h: usize, s: usize) -> bool {
        match (self.action(h, s), other.action(h, s)) {
            (Some(a), Some(b)) => a == b,
            _ => self.dist(h, s) == other.dist(h, s),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Policy<U> {
        Policy {
            num_states: self.num_states,
            num_actions: self.num_actions,
            horizon: self.horizon,
            probs: self
                .probs
                .iter()
                .map(|&p| U::from_f64_lossy(p.to_f64_lossy()))
                .collect(),
            actions: self.actions.clone(),
        }
    }
}

/// Every deterministic policy on `(S, A, H)`, in lexicographic order of the
/// `[h][s]` action table (last cell varies fastest).
///
/// Errors when the count would exceed `limit`.
pub fn all_deterministic<T: Scalar>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    limit: usize,
) -> Result<Vec<Policy<T>>> {
    let cells = (num_states * horizon) as u32;
    let count = (num_actions as u128).checked_pow(cells);
    match count {
        Some(c) if c <= limit as u128 => {}
        _ => {
            return Err(Error::Unsupported(format!(
                "{num_actions}^{cells} deterministic policies exceeds the limit of {limit}"
            )))
        }
    }
    let mut out = Vec::new();
    let mut table = vec![0usize; cells as usize];
    loop {
        out.push(Policy::deterministic(num_states, num_actions, horizon, table.clone())?);
        let mut pos = table.len();
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            table[pos] += 1;
            if table[pos] < num_actions {
                break;
            }
            table[pos] = 0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_rows_are_indicators() {
        let pi = Policy::<f64>::from_fn(2, 3, 2, |h, s| (h + s) % 3).unwrap();
        assert_eq!(pi.dist(1, 1), &[0.0, 0.0, 1.0]);
        assert_eq!(pi.action(0, 1), Some(1));
        assert_eq!(pi.apply(0, &[0.5, 0.5]), vec![0.5, 0.0, 0.0, 0.0, 0.5, 0.0]);
    }

    #[test]
    fn stochastic_rows_must_normalise() {
        assert!(Policy::<f64>::stochastic(1, 2, 1, vec![0.5, 0.4]).is_err());
        let pi = Policy::<f64>::stochastic(1, 2, 1, vec![0.25, 0.75]).unwrap();
        assert!(!pi.is_deterministic());
        assert_eq!(pi.average(0, 0, &[4.0, 8.0]), 7.0);
    }

    #[test]
    fn out_of_range_action_rejected() {
        assert!(Policy::<f64>::constant(2, 2, 1, 2).is_err());
    }

    #[test]
    fn enumeration_counts_and_order() {
        let all = all_deterministic::<f64>(2, 3, 1, 100).unwrap();
        assert_eq!(all.len(), 9);
        assert_eq!(all[0].actions(), Some(&[0, 0][..]));
        assert_eq!(all[1].actions(), Some(&[0, 1][..]));
        assert_eq!(all[8].actions(), Some(&[2, 2][..]));
        assert!(all_deterministic::<f64>(4, 3, 2, 1000).is_err());
    }

    #[test]
    fn policy_matrix_has_one_column_per_state() {
        let pi = Policy::<f64>::uniform(3, 2, 1);
        for s in 0..3 {
            let mut e = vec![0.0; 3];
            e[s] = 1.0;
            let col = pi.apply(0, &e);
            for (idx, &v) in col.iter().enumerate() {
                assert_eq!(v != 0.0, idx / 2 == s);
            }
        }
    }
}
