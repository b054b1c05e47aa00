//! Seeded episode simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::error::{Error, Result};
use crate::estimator::{EpisodeDataset, Transition};
use crate::mdp::{Policy, RewardFamily, TabularMdp};

/// ChaCha8 generator for `(seed, stream)`; distinct streams are independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws `n` categorical samples with probabilities `probs` and returns the
/// count per category (sequential binomial splitting).
pub fn multinomial<R: Rng + ?Sized>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<u64> {
    let mut out = vec![0u64; probs.len()];
    let mut left = n;
    let mut mass = 1.0f64;
    let last = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if i == last {
            out[i] = left;
            break;
        }
        if p <= 0.0 {
            continue;
        }
        let q = (p / mass).clamp(0.0, 1.0);
        let k = if q >= 1.0 {
            left
        } else {
            Binomial::new(left, q).expect("probability in [0, 1]").sample(rng)
        };
        out[i] = k;
        left -= k;
        mass -= p;
        if mass <= 0.0 {
            mass = f64::MIN_POSITIVE;
        }
    }
    out
}

fn binomial<R: Rng + ?Sized>(rng: &mut R, n: u64, p: f64) -> u64 {
    if p <= 0.0 || n == 0 {
        0
    } else if p >= 1.0 {
        n
    } else {
        Binomial::new(n, p).expect("probability in (0, 1)").sample(rng)
    }
}

/// Samples episodes from a fixed model and counts them.
pub struct Simulator<'a> {
    mdp: &'a TabularMdp<f64>,
    rng: ChaCha8Rng,
    episodes: u64,
    cap: Option<u64>,
}

impl<'a> Simulator<'a> {
    pub fn new(mdp: &'a TabularMdp<f64>, seed: u64) -> Self {
        Self::with_stream(mdp, seed, 0)
    }

    pub fn with_stream(mdp: &'a TabularMdp<f64>, seed: u64, stream: u64) -> Self {
        Self {
            mdp,
            rng: stream_rng(seed, stream),
            episodes: 0,
            cap: None,
        }
    }

    pub fn mdp(&self) -> &'a TabularMdp<f64> {
        self.mdp
    }

    /// Episodes sampled so far.
    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    /// Hard limit on the total number of episodes; further requests fail
    /// with [`Error::Budget`].
    pub fn set_cap(&mut self, cap: Option<u64>) {
        self.cap = cap;
    }

    fn reserve(&mut self, n: u64) -> Result<()> {
        if let Some(cap) = self.cap {
            if self.episodes.saturating_add(n) > cap {
                return Err(Error::Budget(self.episodes));
            }
        }
        self.episodes += n;
        Ok(())
    }

    fn draw_reward(&mut self, h: usize, s: usize, a: usize) -> f64 {
        let mean = self.mdp.reward(h, s, a);
        match self.mdp.family(h, s, a) {
            RewardFamily::Point => mean,
            RewardFamily::Bernoulli => {
                if self.rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn draw_index(&mut self, probs: &[f64]) -> usize {
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        let mut fallback = 0;
        for (i, &p) in probs.iter().enumerate() {
            if p > 0.0 {
                fallback = i;
            }
            acc += p;
            if u < acc {
                return i;
            }
        }
        fallback
    }

    pub fn simulate_episode(&mut self, policy: &Policy<f64>) -> Result<Vec<Transition>> {
        policy.check_compatible(self.mdp)?;
        self.reserve(1)?;
        let mut s = self.mdp.initial_state();
        let mut steps = Vec::with_capacity(self.mdp.horizon());
        for h in 0..self.mdp.horizon() {
            let a = match policy.action(h, s) {
                Some(a) => a,
                None => self.draw_index(policy.dist(h, s)),
            };
            let r = self.draw_reward(h, s, a);
            let next = self.draw_index(self.mdp.row(h, s, a));
            steps.push(Transition { s, a, r, next });
            s = next;
        }
        Ok(steps)
    }

    /// Runs `n` episodes of `policy` and adds their counts to `data`.
    ///
    /// Counts are drawn step by step from their exact joint law (multinomial
    /// splits of the cohort at each state), so the cost does not grow with `n`.
    pub fn collect(&mut self, policy: &Policy<f64>, n: u64, data: &mut EpisodeDataset) -> Result<()> {
        policy.check_compatible(self.mdp)?;
        self.reserve(n)?;
        if n == 0 {
            return Ok(());
        }
        let mdp = self.mdp;
        let s_n = mdp.num_states();
        let mut cohort = vec![0u64; s_n];
        cohort[mdp.initial_state()] = n;
        for h in 0..mdp.horizon() {
            let mut next_cohort = vec![0u64; s_n];
            for s in 0..s_n {
                let m = cohort[s];
                if m == 0 {
                    continue;
                }
                let split = match policy.action(h, s) {
                    Some(a) => {
                        let mut v = vec![0u64; mdp.num_actions()];
                        v[a] = m;
                        v
                    }
                    None => multinomial(&mut self.rng, m, policy.dist(h, s)),
                };
                for (a, &k) in split.iter().enumerate() {
                    if k == 0 {
                        continue;
                    }
                    let mean = mdp.reward(h, s, a);
                    let reward = match mdp.family(h, s, a) {
                        RewardFamily::Point => k as f64 * mean,
                        RewardFamily::Bernoulli => binomial(&mut self.rng, k, mean) as f64,
                    };
                    let moves = multinomial(&mut self.rng, k, mdp.row(h, s, a));
                    let mut reward_left = reward;
                    let mut first = true;
                    for (next, &c) in moves.iter().enumerate() {
                        if c == 0 {
                            continue;
                        }
                        // the reward total is attributed to the cell, not to the successor
                        let part = if first { reward_left } else { 0.0 };
                        first = false;
                        reward_left -= part;
                        data.add_transitions(h, s, a, next, c, part);
                        next_cohort[next] += c;
                    }
                }
            }
            cohort = next_cohort;
        }
        data.add_episodes(n);
        Ok(())
    }

    /// Runs `n` episodes one at a time, adding each to `data` and returning the
    /// per-episode returns.
    pub fn collect_episodes(&mut self, policy: &Policy<f64>, n: u64, data: &mut EpisodeDataset) -> Result<Vec<f64>> {
        let mut returns = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let ep = self.simulate_episode(policy)?;
            returns.push(ep.iter().map(|t| t.r).sum());
            data.record_episode(&ep)?;
        }
        Ok(returns)
    }
}
