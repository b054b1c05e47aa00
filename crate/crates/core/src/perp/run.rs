use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimator::{
    delta_recursion, estimate_differences, estimate_model, estimate_reference, step_direction, EpisodeDataset,
};
use crate::explore::{optcov, prune, BackendMode, EpochProgress, ExplorationBackend, OptCovConfig};
use crate::mdp::{Policy, RewardFamily, TabularMdp};
use crate::perp::reference::{eliminate, select_reference, u_table};
use crate::perp::schedule::{beta_ell, epoch_limit, epoch_schedule, eps_exp, reference_budget, Schedule};
use crate::sim::Simulator;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerpConfig {
    pub eps: f64,
    pub kappa: f64,
    /// Multiplier of the reference budget.
    pub c: f64,
    /// Multiplier of the OptCov epoch guard.
    pub c_guard: f64,
    pub mode: BackendMode,
    /// Overrides `ceil(log2(16 / eps))` when smaller.
    pub max_epochs: Option<u32>,
    /// Use the true mean rewards instead of estimated ones.
    pub known_rewards: bool,
    /// Abort with a partial report once this many episodes are used.
    pub episode_cap: Option<u64>,
}

impl PerpConfig {
    pub fn new(eps: f64, kappa: f64) -> Self {
        Self {
            eps,
            kappa,
            c: 1.0,
            c_guard: 1e3,
            mode: BackendMode::Oracle,
            max_epochs: None,
            known_rewards: false,
            episode_cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps must lie in (0, 1], got {}", self.eps)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::Config(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        if !(self.c > 0.0 && self.c_guard > 0.0) {
            return Err(Error::Config("constants c and c_guard must be positive".into()));
        }
        Ok(())
    }

    /// Number of epochs the run may use.
    pub fn epochs(&self) -> u32 {
        let limit = epoch_limit(self.eps);
        self.max_epochs.map_or(limit, |m| m.min(limit))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EpisodeBreakdown {
    pub prune: u64,
    pub reference: u64,
    /// OptCov episodes per step.
    pub optcov: Vec<u64>,
}

impl EpisodeBreakdown {
    pub fn total(&self) -> u64 {
        self.prune + self.reference + self.optcov.iter().sum::<u64>()
    }
}

/// OptCov outcome at one step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub h: usize,
    pub eps_exp: f64,
    pub directions: usize,
    /// `max_phi ||phi||^2_{Sigma^-1}` on the returned data.
    pub design: f64,
    /// Smallest kept count over `eps_unif K_unif / 2SA`.
    pub min_count_ratio: f64,
    pub fallback: bool,
    pub episodes: u64,
    pub progress: Vec<EpochProgress>,
}

impl StepRecord {
    /// Both OptCov inequalities hold.
    pub fn certified(&self) -> bool {
        self.design <= self.eps_exp && self.min_count_ratio >= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub schedule: Schedule,
    /// Indices of the active policies at the start of the epoch.
    pub active: Vec<usize>,
    pub reference: usize,
    pub n_bar: u64,
    pub beta: f64,
    pub kept_states: usize,
    /// Kept cells whose previous-epoch estimate was never visited.
    pub u_hat_unvisited: usize,
    pub steps: Vec<StepRecord>,
    /// `D_hat` per active policy, aligned with `active`.
    pub d_hat: Vec<f64>,
    /// Policy index with the largest `D_hat`.
    pub argmax: usize,
    pub eliminated: Vec<usize>,
    pub episodes: EpisodeBreakdown,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PerpStatus {
    /// A single policy survived.
    Identified,
    /// The epoch limit was reached with several survivors.
    EpochLimit,
    /// The episode cap stopped the run; the report is partial.
    BudgetExhausted,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerpReport {
    pub chosen: usize,
    pub status: PerpStatus,
    pub total_episodes: u64,
    pub epochs: Vec<EpochRecord>,
    /// Survivors after each epoch.
    pub survivors: Vec<Vec<usize>>,
}

impl PerpReport {
    pub fn final_survivors(&self) -> &[usize] {
        self.survivors.last().map_or(&[], Vec::as_slice)
    }
}

/// Runs policy elimination with a reference policy on `policies` and
/// returns the chosen index with the run report.
pub fn perp(sim: Simulator<'_>, policies: &[Policy<f64>], cfg: &PerpConfig) -> Result<(usize, PerpReport)> {
    cfg.validate()?;
    if policies.is_empty() {
        return Err(Error::Config("policy set is empty".into()));
    }
    let mdp = sim.mdp();
    for p in policies {
        p.check_compatible(mdp)?;
        if !p.is_deterministic() {
            return Err(Error::Unsupported("elimination runs on deterministic policies".into()));
        }
    }
    let mut backend = ExplorationBackend::new(sim, cfg.mode);
    backend.simulator_mut().set_cap(cfg.episode_cap);
    let mut state = RunState {
        active: (0..policies.len()).collect(),
        prev_model: uniform_model(mdp, cfg.known_rewards)?,
        prev_keep: None,
        prev_counts: Vec::new(),
        epochs: Vec::new(),
        survivors: Vec::new(),
        last_argmax: 0,
    };
    let start = backend.episodes();
    let mut status = PerpStatus::EpochLimit;
    for epoch in 1..=cfg.epochs() {
        match run_epoch(&mut backend, policies, cfg, epoch, &mut state) {
            Ok(()) => {}
            Err(Error::Budget(_)) => {
                status = PerpStatus::BudgetExhausted;
                break;
            }
            Err(e) => return Err(e),
        }
        if state.active.len() == 1 {
            status = PerpStatus::Identified;
            break;
        }
    }
    let chosen = if state.active.contains(&state.last_argmax) {
        state.last_argmax
    } else {
        state.active[0]
    };
    let report = PerpReport {
        chosen,
        status,
        total_episodes: backend.episodes() - start,
        epochs: state.epochs,
        survivors: state.survivors,
    };
    Ok((chosen, report))
}

struct RunState {
    active: Vec<usize>,
    prev_model: TabularMdp<f64>,
    prev_keep: Option<Vec<Vec<bool>>>,
    prev_counts: Vec<u64>,
    epochs: Vec<EpochRecord>,
    survivors: Vec<Vec<usize>>,
    last_argmax: usize,
}

fn run_epoch(
    backend: &mut ExplorationBackend<'_>,
    policies: &[Policy<f64>],
    cfg: &PerpConfig,
    epoch: u32,
    st: &mut RunState,
) -> Result<()> {
    let mdp = backend.simulator().mdp();
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let sched = epoch_schedule(epoch, s_n, h_n);
    let l2 = f64::from(epoch).powi(2);
    let mut episodes = EpisodeBreakdown::default();

    let before = backend.episodes();
    let kept = prune(backend, sched.eps_unif, cfg.kappa / (3.0 * l2))?;
    episodes.prune = backend.episodes() - before;
    let keep = kept.keep;

    let active_policies: Vec<Policy<f64>> = st.active.iter().map(|&i| policies[i].clone()).collect();
    let table = u_table(&st.prev_model, &active_policies)?;
    let all: Vec<usize> = (0..active_policies.len()).collect();
    let ref_pos = select_reference(&table, &all)?;
    let u_max = all.iter().map(|&i| table[i][ref_pos]).fold(0.0, f64::max);
    let u_hat_unvisited = st
        .prev_keep
        .as_ref()
        .map_or(0, |k| unvisited_kept(&st.prev_counts, k, a_n));
    let n_bar = reference_budget(&sched, s_n, a_n, h_n, st.active.len(), u_max, cfg.kappa, cfg.c)?;

    let pibar = &active_policies[ref_pos];
    let mut ref_data = EpisodeDataset::new(s_n, a_n, h_n, "reference");
    let before = backend.episodes();
    backend.collect(pibar, n_bar, &mut ref_data)?;
    episodes.reference = backend.episodes() - before;
    let w_ref = estimate_reference(&ref_data)?;

    let beta = beta_ell(
        epoch,
        s_n,
        a_n,
        h_n,
        st.active.len(),
        sched.eps_unif,
        sched.k_unif,
        cfg.kappa,
    );
    let tol = eps_exp(sched.eps, h_n, beta);
    let mut design_data = EpisodeDataset::new(s_n, a_n, h_n, "design");
    let mut steps = Vec::with_capacity(h_n);
    for h in 0..h_n {
        let partial = with_initial(estimate_model(&design_data)?.model, mdp.initial_state())?;
        let directions: Vec<Vec<f64>> = active_policies
            .iter()
            .map(|pi| {
                let delta = delta_recursion(&partial, pi, pibar, &w_ref, Some(&keep))?;
                Ok(step_direction(pi, pibar, h, &w_ref[h], &delta[h], Some(&keep[h])))
            })
            .collect::<Result<_>>()?;
        let mut oc = OptCovConfig::new(
            directions,
            tol,
            cfg.kappa / (6.0 * h_n as f64 * l2),
            sched.eps_unif,
            sched.k_unif,
            keep[h].clone(),
            h,
        );
        oc.c_guard = cfg.c_guard;
        let n_dirs = oc.directions.len();
        let res = optcov(backend, &oc)?;
        design_data.copy_step(h, &res.data)?;
        episodes.optcov.push(res.episodes);
        steps.push(StepRecord {
            h,
            eps_exp: tol,
            directions: n_dirs,
            design: res.coverage.design,
            min_count_ratio: res.coverage.min_count_ratio,
            fallback: res.fallback,
            episodes: res.episodes,
            progress: res.progress,
        });
    }

    let emp = estimate_model(&design_data)?;
    let mut model = with_initial(emp.model, mdp.initial_state())?;
    if cfg.known_rewards {
        model = model.with_rewards(mdp.rewards_raw().to_vec())?;
    }
    let est = estimate_differences(&model, &active_policies, ref_pos, w_ref, Some(&keep))?;
    let arg_pos = est.argmax();
    let survivors_pos = eliminate(&est.d_hat, sched.eps)?;
    if !survivors_pos.contains(&arg_pos) {
        return Err(Error::Internal("the empirical best policy was eliminated".into()));
    }
    let survivors: Vec<usize> = survivors_pos.iter().map(|&p| st.active[p]).collect();
    let eliminated: Vec<usize> = st.active.iter().copied().filter(|i| !survivors.contains(i)).collect();

    st.epochs.push(EpochRecord {
        schedule: sched,
        active: st.active.clone(),
        reference: st.active[ref_pos],
        n_bar,
        beta,
        kept_states: keep.iter().flatten().filter(|&&k| k).count(),
        u_hat_unvisited,
        steps,
        d_hat: est.d_hat,
        argmax: st.active[arg_pos],
        eliminated,
        episodes,
    });
    st.last_argmax = st.active[arg_pos];
    st.active = survivors.clone();
    st.survivors.push(survivors);
    st.prev_counts = emp.counts;
    st.prev_model = model;
    st.prev_keep = Some(keep);
    Ok(())
}

/// `P_0` uniform with zero rewards (true rewards when they are known).
fn uniform_model(mdp: &TabularMdp<f64>, known_rewards: bool) -> Result<TabularMdp<f64>> {
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let cells = h_n * s_n * a_n;
    let rewards = if known_rewards {
        mdp.rewards_raw().to_vec()
    } else {
        vec![0.0; cells]
    };
    TabularMdp::new(
        s_n,
        a_n,
        h_n,
        mdp.initial_state(),
        vec![1.0 / s_n as f64; cells * s_n],
        rewards,
        vec![RewardFamily::Point; cells],
    )
}

fn with_initial(model: TabularMdp<f64>, initial: usize) -> Result<TabularMdp<f64>> {
    if model.initial_state() == initial {
        return Ok(model);
    }
    TabularMdp::new(
        model.num_states(),
        model.num_actions(),
        model.horizon(),
        initial,
        model.transitions_raw().to_vec(),
        model.rewards_raw().to_vec(),
        model.families_raw().to_vec(),
    )
}

fn unvisited_kept(counts: &[u64], keep: &[Vec<bool>], num_actions: usize) -> usize {
    let s_n = keep.first().map_or(0, Vec::len);
    counts
        .iter()
        .enumerate()
        .filter(|&(i, &n)| {
            let h = i / (s_n * num_actions);
            let s = (i / num_actions) % s_n;
            n == 0 && keep[h][s]
        })
        .count()
}
