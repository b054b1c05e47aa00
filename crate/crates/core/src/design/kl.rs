use crate::error::{check_dim, Error, Result};
use crate::mdp::{RewardFamily, TabularMdp};

/// KL divergence of the joint (reward, next-state) law at one cell.
#[derive(Clone, Debug, PartialEq)]
pub struct KlCell {
    pub h: usize,
    pub s: usize,
    pub a: usize,
    pub kl: f64,
    /// `log(1 / (2.4 kappa)) / kl`: visits to this cell needed to tell the
    /// models apart if it were the only differing cell.
    pub visit_bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KlReport {
    /// Cells where the two models differ.
    pub cells: Vec<KlCell>,
    /// `sum_h max_{s,a} KL_h(s,a)`.
    pub kl_per_episode: f64,
    /// Lower bound on the expected number of episodes,
    /// `log(1 / (2.4 kappa)) / sum_h max_{s,a} KL_h(s,a)`.
    pub episode_bound: f64,
}

fn reward_atoms(family: RewardFamily, mean: f64) -> Vec<(f64, f64)> {
    match family {
        RewardFamily::Point => vec![(mean, 1.0)],
        RewardFamily::Bernoulli => vec![(0.0, 1.0 - mean), (1.0, mean)],
    }
}

/// KL between two finite laws given as `(atom, probability)` lists.
pub fn categorical_kl(p: &[(f64, f64)], q: &[(f64, f64)]) -> f64 {
    let mass = |law: &[(f64, f64)], x: f64| -> f64 { law.iter().filter(|(y, _)| *y == x).map(|(_, w)| w).sum() };
    let mut seen: Vec<f64> = Vec::new();
    let mut total = 0.0;
    for &(x, _) in p {
        if seen.contains(&x) {
            continue;
        }
        seen.push(x);
        let px = mass(p, x);
        if px <= 0.0 {
            continue;
        }
        let qx = mass(q, x);
        if qx <= 0.0 {
            return f64::INFINITY;
        }
        total += px * (px / qx).ln();
    }
    total.max(0.0)
}

fn row_kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi <= 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total.max(0.0)
}

/// Change-of-measure lower bound for distinguishing `m1` from `m2` with
/// confidence `kappa`.
pub fn kl_sample_lower_bound(m1: &TabularMdp<f64>, m2: &TabularMdp<f64>, kappa: f64) -> Result<KlReport> {
    check_dim("states", m1.num_states(), m2.num_states())?;
    check_dim("actions", m1.num_actions(), m2.num_actions())?;
    check_dim("horizon", m1.horizon(), m2.horizon())?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Config(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let log_term = (1.0 / (2.4 * kappa)).ln().max(0.0);
    let mut cells = Vec::new();
    let mut kl_per_episode = 0.0;
    for h in 0..m1.horizon() {
        let mut step_max = 0.0f64;
        for s in 0..m1.num_states() {
            for a in 0..m1.num_actions() {
                let same = m1.row(h, s, a) == m2.row(h, s, a)
                    && m1.reward(h, s, a) == m2.reward(h, s, a)
                    && m1.family(h, s, a) == m2.family(h, s, a);
                if same {
                    continue;
                }
                let kl = row_kl(m1.row(h, s, a), m2.row(h, s, a))
                    + categorical_kl(
                        &reward_atoms(m1.family(h, s, a), m1.reward(h, s, a)),
                        &reward_atoms(m2.family(h, s, a), m2.reward(h, s, a)),
                    );
                step_max = step_max.max(kl);
                cells.push(KlCell {
                    h,
                    s,
                    a,
                    kl,
                    visit_bound: if kl > 0.0 { log_term / kl } else { f64::INFINITY },
                });
            }
        }
        kl_per_episode += step_max;
    }
    let episode_bound = if kl_per_episode > 0.0 {
        log_term / kl_per_episode
    } else {
        f64::INFINITY
    };
    Ok(KlReport {
        cells,
        kl_per_episode,
        episode_bound,
    })
}
