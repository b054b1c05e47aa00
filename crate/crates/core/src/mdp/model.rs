use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

/// Law of the reward observed at a state-action pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardFamily {
    /// Reward is 1 with probability `mean`, else 0.
    Bernoulli,
    /// Reward equals `mean` deterministically.
    Point,
}

/// Episodic, time-inhomogeneous tabular MDP with dense transition tables.
///
/// Steps are indexed `0..horizon`; step 0 starts in `initial_state`.
/// Transition entries are laid out `[h][s][a][s']`, rewards `[h][s][a]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp<T> {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_state: usize,
    transitions: Vec<T>,
    rewards: Vec<T>,
    families: Vec<RewardFamily>,
}

impl<T: Scalar> TabularMdp<T> {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        transitions: Vec<T>,
        rewards: Vec<T>,
        families: Vec<RewardFamily>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::Config("states, actions and horizon must all be positive".into()));
        }
        if initial_state >= num_states {
            return Err(Error::Config(format!(
                "initial state {initial_state} out of range for {num_states} states"
            )));
        }
        let cells = horizon * num_states * num_actions;
        check_dim("transition table", cells * num_states, transitions.len())?;
        check_dim("reward table", cells, rewards.len())?;
        check_dim("reward family table", cells, families.len())?;

        let mdp = Self {
            num_states,
            num_actions,
            horizon,
            initial_state,
            transitions,
            rewards,
            families,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    /// Builds a model from closures over `(h, s, a, s')` and `(h, s, a)`.
    pub fn from_fn(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_state: usize,
        family: RewardFamily,
        mut transition: impl FnMut(usize, usize, usize, usize) -> T,
        mut reward: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut transitions = Vec::with_capacity(horizon * num_states * num_actions * num_states);
        let mut rewards = Vec::with_capacity(horizon * num_states * num_actions);
        for h in 0..horizon {
            for s in 0..num_states {
                for a in 0..num_actions {
                    rewards.push(reward(h, s, a));
                    for next in 0..num_states {
                        transitions.push(transition(h, s, a, next));
                    }
                }
            }
        }
        let families = vec![family; horizon * num_states * num_actions];
        Self::new(
            num_states,
            num_actions,
            horizon,
            initial_state,
            transitions,
            rewards,
            families,
        )
    }

    fn validate(&self) -> Result<()> {
        let tol = T::stochastic_tol();
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                for a in 0..self.num_actions {
                    let row = self.row(h, s, a);
                    if row.iter().any(|&p| !p.is_finite() || p < -tol || p > T::one() + tol) {
                        return Err(Error::Config(format!(
                            "transition row (h={h}, s={s}, a={a}) has entries outside [0, 1]"
                        )));
                    }
                    let total: T = row.iter().copied().sum();
                    if (total - T::one()).abs() > tol {
                        return Err(Error::Config(format!(
                            "transition row (h={h}, s={s}, a={a}) sums to {total}"
                        )));
                    }
                    let r = self.reward(h, s, a);
                    if !r.is_finite() || r < T::zero() || r > T::one() {
                        return Err(Error::Config(format!(
                            "reward mean at (h={h}, s={s}, a={a}) is {r}, outside [0, 1]"
                        )));
                    }
                }
            }
        }
        Ok(())
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

    pub fn initial_state(&self) -> usize {
        self.initial_state
    }

    /// Number of state-action coordinates, `S * A`.
    pub fn sa_len(&self) -> usize {
        self.num_states * self.num_actions
    }

    #[inline]
    pub fn sa_index(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    /// Next-state distribution `P_h(. | s, a)`.
    #[inline]
    pub fn row(&self, h: usize, s: usize, a: usize) -> &[T] {
        let start = self.cell(h, s, a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn transition(&self, h: usize, s: usize, a: usize, next: usize) -> T {
        self.row(h, s, a)[next]
    }

    #[inline]
    pub fn reward(&self, h: usize, s: usize, a: usize) -> T {
        self.rewards[self.cell(h, s, a)]
    }

    /// Mean rewards at step `h` as an `S * A` vector.
    pub fn rewards_at(&self, h: usize) -> &[T] {
        let start = h * self.sa_len();
        &self.rewards[start..start + self.sa_len()]
    }

    pub fn family(&self, h: usize, s: usize, a: usize) -> RewardFamily {
        self.families[self.cell(h, s, a)]
    }

    pub fn transitions_raw(&self) -> &[T] {
        &self.transitions
    }

    pub fn rewards_raw(&self) -> &[T] {
        &self.rewards
    }

    pub fn families_raw(&self) -> &[RewardFamily] {
        &self.families
    }

    /// Same transitions with a different reward table (same family layout).
    pub fn with_rewards(&self, rewards: Vec<T>) -> Result<Self> {
        Self::new(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.initial_state,
            self.transitions.clone(),
            rewards,
            self.families.clone(),
        )
    }

    /// `w'(s') = sum_{s,a} P_h(s'|s,a) phi(s,a)`.
    pub fn push_forward(&self, h: usize, phi: &[T]) -> Vec<T> {
        let mut next = vec![T::zero(); self.num_states];
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                let mass = phi[self.sa_index(s, a)];
                if mass == T::zero() {
                    continue;
                }
                for (acc, &p) in next.iter_mut().zip(self.row(h, s, a)) {
                    *acc += p * mass;
                }
            }
        }
        next
    }

    /// `sum_{s'} P_h(s'|s,a) v(s')` for every `(s, a)`.
    pub fn expected_next(&self, h: usize, v_next: &[T]) -> Vec<T> {
        let mut out = Vec::with_capacity(self.sa_len());
        for s in 0..self.num_states {
            for a in 0..self.num_actions {
                out.push(self.row(h, s, a).iter().zip(v_next).map(|(&p, &v)| p * v).sum());
            }
        }
        out
    }

    /// Largest deviation between action rows, `max_{h,s,a,a',s'} |P_h(s'|s,a) - P_h(s'|s,a')|`.
    pub fn action_dependence(&self) -> T {
        let mut worst = T::zero();
        for h in 0..self.horizon {
            for s in 0..self.num_states {
                let base = self.row(h, s, 0);
                for a in 1..self.num_actions {
                    for (&p, &q) in self.row(h, s, a).iter().zip(base) {
                        worst = worst.max((p - q).abs());
                    }
                }
            }
        }
        worst
    }

    /// Converts the scalar type, e.g. to run the same instance in `f32`.
    pub fn cast<U: Scalar>(&self) -> Result<TabularMdp<U>> {
        TabularMdp::new(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.initial_state,
            self.transitions
                .iter()
                .map(|&p| U::from_f64_lossy(p.to_f64_lossy()))
                .collect(),
            self.rewards
                .iter()
                .map(|&r| U::from_f64_lossy(r.to_f64_lossy()))
                .collect(),
            self.families.clone(),
        )
    }
}
