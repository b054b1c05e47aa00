use std::fmt::Write as _;

use crate::design::lmo::step_visitation;
use crate::design::solver::{solve_min_max_design, DesignProblem, Direction, DirectionKind};
use crate::error::{Error, Result};
use crate::mdp::{compute_u, gap_profile, GapProfile, Policy, TabularMdp};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Measure {
    /// Difference directions `phi_star - phi_pi`.
    Rho,
    /// `||phi_pi||^2 + ||phi_star||^2` per candidate.
    Pedel,
    /// `||phi_pi||^2` per candidate.
    PedelSingle,
    /// `H * U(pi, pi_star)`; no design involved.
    U,
}

impl Measure {
    pub fn name(self) -> &'static str {
        match self {
            Measure::Rho => "rho",
            Measure::Pedel => "pedel",
            Measure::PedelSingle => "pedel_single",
            Measure::U => "u",
        }
    }
}

#[derive(Clone, Debug)]
pub struct MeasureConfig {
    pub eps: f64,
    pub tie_tol: f64,
    pub tol: f64,
    pub max_iters: usize,
}

impl MeasureConfig {
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            tie_tol: 1e-12,
            tol: 1e-4,
            max_iters: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepValue {
    pub h: usize,
    pub value: f64,
    pub lower_bound: f64,
    pub certified: bool,
    pub binding_policy: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureReport {
    pub measure: Measure,
    pub total: f64,
    pub steps: Vec<StepValue>,
    pub certified: bool,
    pub binding_policy: Option<usize>,
    pub diagnostic: Option<String>,
}

impl MeasureReport {
    fn degenerate(measure: Measure, why: &str) -> Self {
        Self {
            measure,
            total: f64::INFINITY,
            steps: Vec::new(),
            certified: true,
            binding_policy: None,
            diagnostic: Some(why.to_string()),
        }
    }
}

/// `max(eps, Delta(pi))` per candidate, or `None` when some denominator vanishes.
fn denominators(gaps: &GapProfile<f64>, eps: f64) -> Option<Vec<f64>> {
    let d: Vec<f64> = gaps.gaps.iter().map(|&g| g.max(eps)).collect();
    if d.iter().any(|&x| x <= 0.0) {
        None
    } else {
        Some(d)
    }
}

const DEGENERATE: &str = "eps = 0 and the best policy is not unique: gap denominators vanish";

fn check_inputs(mdp: &TabularMdp<f64>, policies: &[Policy<f64>], eps: f64) -> Result<GapProfile<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("eps must be nonnegative, got {eps}")));
    }
    for p in policies {
        p.check_compatible(mdp)?;
    }
    gap_profile(mdp, policies, 1e-12)
}

/// Step-`h` directions of a design-based measure, gap scaling folded in.
pub fn measure_directions(
    mdp: &TabularMdp<f64>,
    policies: &[Policy<f64>],
    best: usize,
    denominators: &[f64],
    h: usize,
    measure: Measure,
) -> Vec<Direction> {
    let star = step_visitation(mdp, &policies[best], h);
    policies
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let phi = step_visitation(mdp, pi, h);
            let d2 = denominators[i] * denominators[i];
            let squared: Vec<f64> = match measure {
                Measure::Rho => star.iter().zip(&phi).map(|(a, b)| (a - b) * (a - b) / d2).collect(),
                Measure::Pedel => star.iter().zip(&phi).map(|(a, b)| (a * a + b * b) / d2).collect(),
                _ => phi.iter().map(|b| b * b / d2).collect(),
            };
            let kind = match measure {
                Measure::Rho => DirectionKind::Difference { policy: i },
                Measure::Pedel => DirectionKind::Combined { policy: i },
                _ => DirectionKind::Single { policy: i },
            };
            Direction::from_squared(squared, kind)
        })
        .collect()
}

fn design_measure(
    mdp: &TabularMdp<f64>,
    policies: &[Policy<f64>],
    cfg: &MeasureConfig,
    measure: Measure,
) -> Result<MeasureReport> {
    let gaps = check_inputs(mdp, policies, cfg.eps)?;
    let Some(den) = denominators(&gaps, cfg.eps) else {
        return Ok(MeasureReport::degenerate(measure, DEGENERATE));
    };
    let mut steps = Vec::with_capacity(mdp.horizon());
    for h in 0..mdp.horizon() {
        let dirs = measure_directions(mdp, policies, gaps.best, &den, h, measure);
        let mut problem = DesignProblem::new(mdp, h, dirs).with_tol(cfg.tol);
        problem.max_iters = cfg.max_iters;
        let sol = solve_min_max_design(&problem)?;
        steps.push(StepValue {
            h,
            value: sol.value,
            lower_bound: sol.lower_bound,
            certified: sol.certified,
            binding_policy: sol.binding,
        });
    }
    let total = steps.iter().map(|s| s.value).sum();
    let binding_policy = steps
        .iter()
        .fold(None::<&StepValue>, |acc, s| match acc {
            Some(a) if a.value >= s.value => Some(a),
            _ => Some(s),
        })
        .and_then(|s| s.binding_policy);
    Ok(MeasureReport {
        measure,
        total,
        certified: steps.iter().all(|s| s.certified),
        steps,
        binding_policy,
        diagnostic: None,
    })
}

/// `sum_h inf_lambda max_pi ||phi_star_h - phi_pi_h||^2 / max(eps, Delta(pi))^2`.
pub fn rho_pi(mdp: &TabularMdp<f64>, policies: &[Policy<f64>], cfg: &MeasureConfig) -> Result<MeasureReport> {
    design_measure(mdp, policies, cfg, Measure::Rho)
}

/// Individual-norm complexity with numerator `||phi_pi||^2 + ||phi_star||^2`.
pub fn pedel_complexity(mdp: &TabularMdp<f64>, policies: &[Policy<f64>], cfg: &MeasureConfig) -> Result<MeasureReport> {
    design_measure(mdp, policies, cfg, Measure::Pedel)
}

/// Individual-norm complexity with numerator `||phi_pi||^2` only.
pub fn pedel_single(mdp: &TabularMdp<f64>, policies: &[Policy<f64>], cfg: &MeasureConfig) -> Result<MeasureReport> {
    design_measure(mdp, policies, cfg, Measure::PedelSingle)
}

/// `max_pi H * U(pi, pi_star) / max(eps, Delta(pi))^2`, with `pi_star` the
/// lowest-index best policy of the set.
pub fn u_complexity(mdp: &TabularMdp<f64>, policies: &[Policy<f64>], cfg: &MeasureConfig) -> Result<MeasureReport> {
    let gaps = check_inputs(mdp, policies, cfg.eps)?;
    let Some(den) = denominators(&gaps, cfg.eps) else {
        return Ok(MeasureReport::degenerate(Measure::U, DEGENERATE));
    };
    let horizon = mdp.horizon() as f64;
    let star = &policies[gaps.best];
    let mut best = (0.0, None, Vec::new());
    for (i, pi) in policies.iter().enumerate() {
        let u = compute_u(mdp, pi, star)?;
        let scaled = horizon * u.total / (den[i] * den[i]);
        if best.1.is_none() || scaled > best.0 {
            best = (
                scaled,
                Some(i),
                u.per_step.iter().map(|x| horizon * x / (den[i] * den[i])).collect(),
            );
        }
    }
    let steps = best
        .2
        .iter()
        .enumerate()
        .map(|(h, &value)| StepValue {
            h,
            // normalise -0 from cancelling terms
            value: value + 0.0,
            lower_bound: value + 0.0,
            certified: true,
            binding_policy: best.1,
        })
        .collect();
    Ok(MeasureReport {
        measure: Measure::U,
        total: best.0,
        steps,
        certified: true,
        binding_policy: best.1,
        diagnostic: None,
    })
}

pub fn measure(
    mdp: &TabularMdp<f64>,
    policies: &[Policy<f64>],
    cfg: &MeasureConfig,
    which: Measure,
) -> Result<MeasureReport> {
    match which {
        Measure::U => u_complexity(mdp, policies, cfg),
        other => design_measure(mdp, policies, cfg, other),
    }
}

/// All four measures on one instance.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityReport {
    pub rho: MeasureReport,
    pub pedel: MeasureReport,
    pub pedel_single: MeasureReport,
    pub u: MeasureReport,
}

impl ComplexityReport {
    pub fn compute(mdp: &TabularMdp<f64>, policies: &[Policy<f64>], cfg: &MeasureConfig) -> Result<Self> {
        Ok(Self {
            rho: rho_pi(mdp, policies, cfg)?,
            pedel: pedel_complexity(mdp, policies, cfg)?,
            pedel_single: pedel_single(mdp, policies, cfg)?,
            u: u_complexity(mdp, policies, cfg)?,
        })
    }

    pub fn to_csv(&self) -> String {
        reports_to_csv(&[&self.rho, &self.pedel, &self.pedel_single, &self.u])
    }
}

/// CSV with columns `measure,h,value,certified,binding_policy`; each report
/// contributes one row per step and a `total` row.
pub fn reports_to_csv(reports: &[&MeasureReport]) -> String {
    let mut out = String::from("measure,h,value,certified,binding_policy\n");
    let fmt_binding = |b: Option<usize>| b.map_or(String::new(), |i| i.to_string());
    for r in reports {
        for s in &r.steps {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.measure.name(),
                s.h + 1,
                s.value,
                s.certified,
                fmt_binding(s.binding_policy)
            );
        }
        let _ = writeln!(
            out,
            "{},total,{},{},{}",
            r.measure.name(),
            r.total,
            r.certified,
            fmt_binding(r.binding_policy)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::figure1_m;

    #[test]
    fn singleton_sets_are_free_for_differences() {
        let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
        let cfg = MeasureConfig::new(0.1);
        let one = &pis[..1];
        assert_eq!(rho_pi(&mdp, one, &cfg).unwrap().total, 0.0);
        assert_eq!(u_complexity(&mdp, one, &cfg).unwrap().total, 0.0);
    }

    #[test]
    fn u_measure_on_figure1() {
        let (mdp, pis) = figure1_m::<f64>(0.01, false).unwrap();
        let r = u_complexity(&mdp, &pis, &MeasureConfig::new(0.01)).unwrap();
        assert!((r.total - 600.0).abs() < 1e-9, "{}", r.total);
        assert_eq!(r.binding_policy, Some(1));
    }

    #[test]
    fn degenerate_eps_zero_reports_infinity() {
        let (mdp, pis) = figure1_m::<f64>(0.0, false).unwrap();
        let r = rho_pi(&mdp, &pis, &MeasureConfig::new(0.0)).unwrap();
        assert!(r.total.is_infinite());
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn csv_layout() {
        let (mdp, pis) = figure1_m::<f64>(0.1, false).unwrap();
        let r = u_complexity(&mdp, &pis, &MeasureConfig::new(0.1)).unwrap();
        let csv = reports_to_csv(&[&r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "measure,h,value,certified,binding_policy");
        assert!(lines[3].starts_with("u,total,"));
    }
}
