use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::design::{lmo_best_visitation_policy, max_reachability, reach_policy};
use crate::error::{Error, Result};
use crate::estimator::{estimate_model, EpisodeDataset};
use crate::mdp::{Policy, TabularMdp};
use crate::sim::Simulator;

/// How exploration policies are chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendMode {
    /// Plan on the true model. Counts still come from sampled episodes.
    #[default]
    Oracle,
    /// Plan on an optimistic model built from everything collected so far.
    Online,
}

impl fmt::Display for BackendMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendMode::Oracle => "oracle",
            BackendMode::Online => "online",
        })
    }
}

impl FromStr for BackendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(BackendMode::Oracle),
            "online" => Ok(BackendMode::Online),
            other => Err(Error::Config(format!("unknown backend mode `{other}`"))),
        }
    }
}

/// Reachability of one `(h, s)` as seen by the backend.
#[derive(Clone, Debug)]
pub struct Reach {
    /// Policy that tries to reach the state.
    pub policy: Policy<f64>,
    /// Upper bound on `W*_h(s)` (exact in oracle mode).
    pub upper: f64,
}

/// Episode source for the exploration routines.
///
/// Every count handed out is sampled from the simulator; the true model is
/// only read in oracle mode, and only to pick policies.
pub struct ExplorationBackend<'a> {
    mode: BackendMode,
    sim: Simulator<'a>,
    knowledge: EpisodeDataset,
    w_star: Option<Vec<Vec<f64>>>,
    /// Doubling rounds allowed per target in online mode.
    pub max_rounds: u32,
}

impl<'a> ExplorationBackend<'a> {
    pub fn new(sim: Simulator<'a>, mode: BackendMode) -> Self {
        let mdp = sim.mdp();
        let knowledge = EpisodeDataset::new(mdp.num_states(), mdp.num_actions(), mdp.horizon(), "backend");
        let w_star = (mode == BackendMode::Oracle).then(|| max_reachability(mdp));
        Self {
            mode,
            sim,
            knowledge,
            w_star,
            max_rounds: 40,
        }
    }

    pub fn mode(&self) -> BackendMode {
        self.mode
    }

    pub fn simulator(&self) -> &Simulator<'a> {
        &self.sim
    }

    pub fn simulator_mut(&mut self) -> &mut Simulator<'a> {
        &mut self.sim
    }

    pub fn into_simulator(self) -> Simulator<'a> {
        self.sim
    }

    /// Episodes sampled through the simulator so far.
    pub fn episodes(&self) -> u64 {
        self.sim.episodes()
    }

    pub fn num_states(&self) -> usize {
        self.sim.mdp().num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.sim.mdp().num_actions()
    }

    pub fn horizon(&self) -> usize {
        self.sim.mdp().horizon()
    }

    pub fn initial_state(&self) -> usize {
        self.sim.mdp().initial_state()
    }

    /// All data collected through this backend (online mode only).
    pub fn knowledge(&self) -> &EpisodeDataset {
        &self.knowledge
    }

    /// Runs `n` episodes of `policy` into `data`.
    pub fn collect(&mut self, policy: &Policy<f64>, n: u64, data: &mut EpisodeDataset) -> Result<()> {
        if self.mode == BackendMode::Oracle {
            return self.sim.collect(policy, n, data);
        }
        let mdp = self.sim.mdp();
        let mut fresh = EpisodeDataset::new(mdp.num_states(), mdp.num_actions(), mdp.horizon(), "");
        self.sim.collect(policy, n, &mut fresh)?;
        self.knowledge.merge(&fresh)?;
        data.merge(&fresh)
    }

    /// Exact `W*_h(s)` in oracle mode.
    pub fn exact_reach(&self, h: usize, s: usize) -> Option<f64> {
        self.w_star.as_ref().map(|w| w[h][s])
    }

    /// A reaching policy for `(h, s)` with an upper bound on `W*_h(s)` valid
    /// at confidence `delta` (exact in oracle mode).
    pub fn reach(&self, h: usize, s: usize, delta: f64) -> Result<Reach> {
        match self.mode {
            BackendMode::Oracle => {
                let (policy, upper) = reach_policy(self.sim.mdp(), h, s);
                Ok(Reach { policy, upper })
            }
            BackendMode::Online => self.optimistic_reach(h, s, delta),
        }
    }

    /// Policy maximising `sum weight(s,a) phi_h(s,a)` on the planning model.
    pub fn plan_lmo(&self, h: usize, weight: &[f64]) -> Result<Policy<f64>> {
        let scale = weight.iter().fold(0.0f64, |m, &w| m.max(w.abs()));
        let normalized: Vec<f64> = if scale > 0.0 {
            weight.iter().map(|&w| w / scale).collect()
        } else {
            weight.to_vec()
        };
        let policy = match self.mode {
            BackendMode::Oracle => lmo_best_visitation_policy(self.sim.mdp(), h, &normalized).0,
            BackendMode::Online => {
                let model = self.planning_model()?;
                lmo_best_visitation_policy(&model, h, &normalized).0
            }
        };
        Ok(policy)
    }

    fn planning_model(&self) -> Result<TabularMdp<f64>> {
        let est = estimate_model(&self.knowledge)?;
        let mdp = self.sim.mdp();
        TabularMdp::new(
            mdp.num_states(),
            mdp.num_actions(),
            mdp.horizon(),
            mdp.initial_state(),
            est.model.transitions_raw().to_vec(),
            est.model.rewards_raw().to_vec(),
            est.model.families_raw().to_vec(),
        )
    }

    /// Optimistic reach probability: the empirical row of every visited cell
    /// may move an L1 mass of `b(N)` towards the best successor, unvisited
    /// cells are fully optimistic.
    fn optimistic_reach(&self, h: usize, target: usize, delta: f64) -> Result<Reach> {
        let (s_n, a_n, h_n) = (self.num_states(), self.num_actions(), self.horizon());
        let cell_delta = (delta / (s_n * a_n * h_n) as f64).clamp(f64::MIN_POSITIVE, 1.0);
        let log_term = s_n as f64 * std::f64::consts::LN_2 + (1.0 / cell_delta).ln();
        let mut actions = vec![0usize; h_n * s_n];
        let mut v = vec![0.0; s_n];
        v[target] = 1.0;
        for k in (0..h).rev() {
            let top = v.iter().cloned().fold(0.0f64, f64::max);
            let bottom = v.iter().cloned().fold(1.0f64, f64::min);
            let mut next_v = vec![0.0; s_n];
            for s in 0..s_n {
                let mut best = (0usize, f64::NEG_INFINITY);
                for a in 0..a_n {
                    let n = self.knowledge.count(k, s, a);
                    let q = if n == 0 {
                        top
                    } else {
                        let nf = n as f64;
                        let mean: f64 = self
                            .knowledge
                            .next_counts(k, s, a)
                            .iter()
                            .zip(&v)
                            .map(|(&c, &x)| c as f64 / nf * x)
                            .sum();
                        let radius = (2.0 * log_term / nf).sqrt().min(2.0);
                        (mean + 0.5 * radius * (top - bottom)).min(top)
                    };
                    if q > best.1 + 1e-15 {
                        best = (a, q);
                    }
                }
                actions[k * s_n + s] = best.0;
                next_v[s] = best.1;
            }
            v = next_v;
        }
        let policy = Policy::deterministic(s_n, a_n, h_n, actions)?;
        Ok(Reach {
            policy,
            upper: v[self.initial_state()].clamp(0.0, 1.0),
        })
    }
}

/// `policy` with action `a` forced at `(h, s)`.
pub(crate) fn with_action(policy: &Policy<f64>, h: usize, s: usize, a: usize) -> Result<Policy<f64>> {
    let mut actions = policy
        .actions()
        .ok_or_else(|| Error::Unsupported("forcing an action needs a deterministic policy".into()))?
        .to_vec();
    actions[h * policy.num_states() + s] = a;
    Policy::deterministic(policy.num_states(), policy.num_actions(), policy.horizon(), actions)
}
