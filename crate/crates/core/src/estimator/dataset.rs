use crate::error::{check_dim, Error, Result};
use crate::io::TrajectoryRecord;

/// One logged step `(s_h, a_h, r_h, s_{h+1})`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub s: usize,
    pub a: usize,
    pub r: f64,
    pub next: usize,
}

/// Sufficient statistics of a batch of episodes: visit counts, transition
/// counts and reward sums per `(h, s, a)`, plus state visit counts per step.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeDataset {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    pub tag: String,
    episodes: u64,
    sa_counts: Vec<u64>,
    next_counts: Vec<u64>,
    reward_sums: Vec<f64>,
    state_counts: Vec<u64>,
}

impl EpisodeDataset {
    pub fn new(num_states: usize, num_actions: usize, horizon: usize, tag: impl Into<String>) -> Self {
        let cells = horizon * num_states * num_actions;
        Self {
            num_states,
            num_actions,
            horizon,
            tag: tag.into(),
            episodes: 0,
            sa_counts: vec![0; cells],
            next_counts: vec![0; cells * num_states],
            reward_sums: vec![0.0; cells],
            state_counts: vec![0; horizon * num_states],
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

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    #[inline]
    fn cell(&self, h: usize, s: usize, a: usize) -> usize {
        (h * self.num_states + s) * self.num_actions + a
    }

    /// Adds `count` visits of `(h, s, a)` that all moved to `next`, with
    /// total reward `reward_sum`.
    pub fn add_transitions(&mut self, h: usize, s: usize, a: usize, next: usize, count: u64, reward_sum: f64) {
        let c = self.cell(h, s, a);
        self.sa_counts[c] += count;
        self.next_counts[c * self.num_states + next] += count;
        self.reward_sums[c] += reward_sum;
        self.state_counts[h * self.num_states + s] += count;
    }

    pub(crate) fn add_episodes(&mut self, n: u64) {
        self.episodes += n;
    }

    pub fn record_episode(&mut self, steps: &[Transition]) -> Result<()> {
        check_dim("episode length", self.horizon, steps.len())?;
        for (h, t) in steps.iter().enumerate() {
            if t.s >= self.num_states || t.next >= self.num_states || t.a >= self.num_actions {
                return Err(Error::Config(format!("step {h} of episode has out-of-range indices")));
            }
            self.add_transitions(h, t.s, t.a, t.next, 1, t.r);
        }
        self.episodes += 1;
        Ok(())
    }

    /// Builds a dataset from logged records, keeping those whose tag matches
    /// `tag` (all records when `tag` is `None`).
    pub fn from_records(
        records: &[TrajectoryRecord],
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        tag: Option<&str>,
    ) -> Result<Self> {
        let label = tag.map_or_else(|| "log".to_string(), str::to_string);
        let mut data = Self::new(num_states, num_actions, horizon, label);
        for rec in records.iter().filter(|r| tag.is_none_or(|t| r.policy == t)) {
            let steps: Vec<Transition> = rec
                .steps
                .iter()
                .map(|&(s, a, r, next)| Transition { s, a, r, next })
                .collect();
            data.record_episode(&steps)?;
        }
        Ok(data)
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        check_dim("merged states", self.num_states, other.num_states)?;
        check_dim("merged actions", self.num_actions, other.num_actions)?;
        check_dim("merged horizon", self.horizon, other.horizon)?;
        self.episodes += other.episodes;
        for (x, y) in self.sa_counts.iter_mut().zip(&other.sa_counts) {
            *x += y;
        }
        for (x, y) in self.next_counts.iter_mut().zip(&other.next_counts) {
            *x += y;
        }
        for (x, y) in self.reward_sums.iter_mut().zip(&other.reward_sums) {
            *x += y;
        }
        for (x, y) in self.state_counts.iter_mut().zip(&other.state_counts) {
            *x += y;
        }
        Ok(())
    }

    /// Replaces the step-`h` statistics with those of `other`. The episode
    /// count is left unchanged.
    pub fn copy_step(&mut self, h: usize, other: &Self) -> Result<()> {
        check_dim("copied states", self.num_states, other.num_states)?;
        check_dim("copied actions", self.num_actions, other.num_actions)?;
        check_dim("copied horizon", self.horizon, other.horizon)?;
        let sa = self.num_states * self.num_actions;
        let cells = h * sa..(h + 1) * sa;
        self.sa_counts[cells.clone()].copy_from_slice(&other.sa_counts[cells.clone()]);
        self.reward_sums[cells.clone()].copy_from_slice(&other.reward_sums[cells.clone()]);
        let nexts = cells.start * self.num_states..cells.end * self.num_states;
        self.next_counts[nexts.clone()].copy_from_slice(&other.next_counts[nexts]);
        let states = h * self.num_states..(h + 1) * self.num_states;
        self.state_counts[states.clone()].copy_from_slice(&other.state_counts[states]);
        Ok(())
    }

    #[inline]
    pub fn count(&self, h: usize, s: usize, a: usize) -> u64 {
        self.sa_counts[self.cell(h, s, a)]
    }

    /// Step-`h` visit counts as an `S * A` vector.
    pub fn counts_at(&self, h: usize) -> &[u64] {
        let sa = self.num_states * self.num_actions;
        &self.sa_counts[h * sa..(h + 1) * sa]
    }

    pub fn next_counts(&self, h: usize, s: usize, a: usize) -> &[u64] {
        let start = self.cell(h, s, a) * self.num_states;
        &self.next_counts[start..start + self.num_states]
    }

    pub fn reward_sum(&self, h: usize, s: usize, a: usize) -> f64 {
        self.reward_sums[self.cell(h, s, a)]
    }

    pub fn state_visits(&self, h: usize, s: usize) -> u64 {
        self.state_counts[h * self.num_states + s]
    }

    pub fn total_reward(&self) -> f64 {
        self.reward_sums.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_follow_trajectories() {
        let mut d = EpisodeDataset::new(2, 2, 2, "t");
        let ep = [
            Transition {
                s: 0,
                a: 1,
                r: 1.0,
                next: 1,
            },
            Transition {
                s: 1,
                a: 0,
                r: 0.0,
                next: 1,
            },
        ];
        d.record_episode(&ep).unwrap();
        d.record_episode(&ep).unwrap();
        assert_eq!(d.episodes(), 2);
        assert_eq!(d.count(0, 0, 1), 2);
        assert_eq!(d.next_counts(0, 0, 1), &[0, 2]);
        assert_eq!(d.state_visits(1, 1), 2);
        assert_eq!(d.total_reward(), 2.0);
        let total: u64 = d.next_counts(1, 1, 0).iter().sum();
        assert_eq!(total, d.count(1, 1, 0));
    }

    #[test]
    fn rejects_wrong_length_and_indices() {
        let mut d = EpisodeDataset::new(2, 2, 2, "t");
        assert!(d
            .record_episode(&[Transition {
                s: 0,
                a: 0,
                r: 0.0,
                next: 0
            }])
            .is_err());
        let bad = [
            Transition {
                s: 0,
                a: 2,
                r: 0.0,
                next: 0,
            },
            Transition {
                s: 0,
                a: 0,
                r: 0.0,
                next: 0,
            },
        ];
        assert!(d.record_episode(&bad).is_err());
    }

    #[test]
    fn merge_adds_counts() {
        let mut a = EpisodeDataset::new(1, 1, 1, "a");
        a.record_episode(&[Transition {
            s: 0,
            a: 0,
            r: 0.5,
            next: 0,
        }])
        .unwrap();
        let b = a.clone();
        a.merge(&b).unwrap();
        assert_eq!(a.episodes(), 2);
        assert_eq!(a.reward_sum(0, 0, 0), 1.0);
    }

    #[test]
    fn copy_step_touches_one_step() {
        let mut src = EpisodeDataset::new(2, 1, 2, "src");
        let ep = [
            Transition {
                s: 1,
                a: 0,
                r: 1.0,
                next: 0,
            },
            Transition {
                s: 0,
                a: 0,
                r: 0.0,
                next: 1,
            },
        ];
        src.record_episode(&ep).unwrap();
        let mut dst = EpisodeDataset::new(2, 1, 2, "dst");
        dst.copy_step(1, &src).unwrap();
        assert_eq!(dst.count(1, 0, 0), 1);
        assert_eq!(dst.next_counts(1, 0, 0), &[0, 1]);
        assert_eq!(dst.count(0, 1, 0), 0);
        assert_eq!(dst.episodes(), 0);
    }
}
