use std::collections::HashMap;

use crate::design::lmo::{lmo_best_visitation_policy, max_reachability};
use crate::design::polish::{polish, PolishInput};
use crate::design::value::weighted_design_value;
use crate::error::{check_dim, Error, Result};
use crate::mdp::{Policy, TabularMdp};

/// Where a design direction came from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DirectionKind {
    /// `phi_star - phi_pi` for candidate `policy`.
    Difference {
        policy: usize,
    },
    /// `phi_pi` alone.
    Single {
        policy: usize,
    },
    /// Sum of squared norms of `phi_pi` and `phi_star` (one term per candidate).
    Combined {
        policy: usize,
    },
    /// Algorithm direction after masking.
    Masked {
        policy: usize,
    },
    Custom,
}

/// A design direction, stored through its squared entries since every
/// design value depends on `u` only through `u^2`.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction {
    pub squared: Vec<f64>,
    pub kind: DirectionKind,
}

impl Direction {
    pub fn from_vector(u: &[f64], kind: DirectionKind) -> Self {
        Self {
            squared: u.iter().map(|x| x * x).collect(),
            kind,
        }
    }

    pub fn from_squared(squared: Vec<f64>, kind: DirectionKind) -> Self {
        Self { squared, kind }
    }

    pub fn is_zero(&self) -> bool {
        self.squared.iter().all(|&c| c == 0.0)
    }
}

#[derive(Clone, Debug)]
pub struct DesignProblem<'a> {
    pub mdp: &'a TabularMdp<f64>,
    pub step: usize,
    pub directions: Vec<Direction>,
    pub regularizer: Option<Vec<f64>>,
    /// Relative optimality tolerance of the certificate.
    pub tol: f64,
    pub max_iters: usize,
}

impl<'a> DesignProblem<'a> {
    pub fn new(mdp: &'a TabularMdp<f64>, step: usize, directions: Vec<Direction>) -> Self {
        Self {
            mdp,
            step,
            directions,
            regularizer: None,
            tol: 1e-4,
            max_iters: 20_000,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

/// A step-`h` state-action distribution together with a policy mixture that
/// realises it.
#[derive(Clone, Debug)]
pub struct OccupancyDesign {
    pub step: usize,
    pub lambda: Vec<f64>,
    pub mixture: Vec<(Policy<f64>, f64)>,
}

#[derive(Clone, Debug)]
pub struct DesignSolution {
    pub design: OccupancyDesign,
    /// `max_u design_value(lambda, u)` at the returned design.
    pub value: f64,
    /// Log-sum-exp value at the final smoothing level.
    pub smoothed_value: f64,
    /// Certified lower bound on the optimum.
    pub lower_bound: f64,
    pub certified: bool,
    /// Index into the problem's directions attaining the max.
    pub binding: Option<usize>,
    pub iterations: usize,
    /// Directions with mass on cells no policy reaches at this step.
    pub unreachable: Vec<usize>,
}

struct Vertex {
    policy: Policy<f64>,
    phi: Vec<f64>,
    weight: f64,
}

struct Smoothed {
    values: Vec<f64>,
    max: f64,
    smooth: f64,
    weights: Vec<f64>,
}

/// Values `g_u(lambda)` and their softmax at inverse temperature `eta`.
fn smooth_eval(dirs: &[Vec<f64>], mass: &[f64], eta: f64) -> Smoothed {
    let values: Vec<f64> = dirs
        .iter()
        .map(|c| weighted_design_value(mass, None, c.iter().copied()))
        .collect();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = values.iter().map(|&g| (eta * (g - max)).exp()).collect();
    let z: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= z);
    Smoothed {
        values,
        max,
        smooth: max + z.ln() / eta,
        weights,
    }
}

fn total_mass(lambda: &[f64], reg: Option<&[f64]>) -> Vec<f64> {
    match reg {
        Some(r) => lambda.iter().zip(r).map(|(l, r)| l + r).collect(),
        None => lambda.to_vec(),
    }
}

/// Derivative of the smoothed objective along `lambda + gamma * d`.
fn line_derivative(dirs: &[Vec<f64>], mass: &[f64], d: &[f64], gamma: f64, eta: f64) -> f64 {
    let moved: Vec<f64> = mass.iter().zip(d).map(|(m, x)| m + gamma * x).collect();
    for c in dirs {
        if c.iter().zip(&moved).any(|(&ci, &m)| ci > 0.0 && m <= 0.0) {
            return f64::INFINITY;
        }
    }
    let sm = smooth_eval(dirs, &moved, eta);
    let mut deriv = 0.0;
    for (c, &q) in dirs.iter().zip(&sm.weights) {
        if q == 0.0 {
            continue;
        }
        let dg: f64 = c
            .iter()
            .zip(&moved)
            .zip(d)
            .filter(|((&ci, _), _)| ci > 0.0)
            .map(|((&ci, &m), &x)| -ci * x / (m * m))
            .sum();
        deriv += q * dg;
    }
    deriv
}

fn line_search(dirs: &[Vec<f64>], mass: &[f64], d: &[f64], gamma_max: f64, eta: f64) -> f64 {
    if line_derivative(dirs, mass, d, gamma_max, eta) <= 0.0 {
        return gamma_max;
    }
    if line_derivative(dirs, mass, d, 0.0, eta) >= 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if line_derivative(dirs, mass, d, mid, eta) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    lo
}

/// Approximately solves `min_lambda max_u sum u^2 / (lambda + lambda0)` over
/// the step-`h` occupancy polytope.
///
/// Away-step Frank-Wolfe on the log-sum-exp smoothing with inverse
/// temperature `2^(2i/5)` (relative to the current value) at stage `i`;
/// vertices come from [`lmo_best_visitation_policy`]. The returned
/// `lower_bound` is `sum_u q_u g_u(lambda) - gap`, the Frank-Wolfe bound for
/// the `q`-weighted average objective, which lower-bounds the min-max.
pub fn solve_min_max_design(problem: &DesignProblem<'_>) -> Result<DesignSolution> {
    let mdp = problem.mdp;
    let sa = mdp.sa_len();
    let h = problem.step;
    if h >= mdp.horizon() {
        return Err(Error::Config(format!(
            "design step {h} outside horizon {}",
            mdp.horizon()
        )));
    }
    if problem.directions.is_empty() {
        return Err(Error::Config("design needs at least one direction".into()));
    }
    if !(problem.tol > 0.0) {
        return Err(Error::Config("design tolerance must be positive".into()));
    }
    for d in &problem.directions {
        check_dim("design direction", sa, d.squared.len())?;
        if d.squared.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::Config("design directions must be finite".into()));
        }
    }
    let reg = problem.regularizer.as_deref();
    if let Some(r) = reg {
        check_dim("design regularizer", sa, r.len())?;
    }

    let reach = &max_reachability(mdp)[h];
    let na = mdp.num_actions();
    let covered = |idx: usize| reach[idx / na] > 0.0 || reg.is_some_and(|r| r[idx] > 0.0);
    let unreachable: Vec<usize> = problem
        .directions
        .iter()
        .enumerate()
        .filter(|(_, d)| {
            d.squared
                .iter()
                .enumerate()
                .any(|(i, &c)| c > 0.0 && reach[i / na] == 0.0)
        })
        .map(|(i, _)| i)
        .collect();

    // unique nonzero squared directions
    let mut unique: Vec<Vec<f64>> = Vec::new();
    let mut owner: Vec<usize> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    for (i, d) in problem.directions.iter().enumerate() {
        if d.is_zero() {
            continue;
        }
        let key: Vec<u64> = d.squared.iter().map(|c| c.to_bits()).collect();
        seen.entry(key).or_insert_with(|| {
            unique.push(d.squared.clone());
            owner.push(i);
            unique.len() - 1
        });
    }

    // initial vertices: one max-visitation policy per supported cell
    let mut support: Vec<usize> = (0..sa).filter(|&i| unique.iter().any(|c| c[i] > 0.0)).collect();
    if support.is_empty() {
        support.push(0);
    }
    let mut active: Vec<Vertex> = Vec::new();
    for &cell in &support {
        let mut w = vec![0.0; sa];
        w[cell] = 1.0;
        let (policy, phi, _) = lmo_best_visitation_policy(mdp, h, &w);
        if !active.iter().any(|v| v.policy == policy) {
            active.push(Vertex {
                policy,
                phi,
                weight: 0.0,
            });
        }
    }
    let n0 = active.len() as f64;
    active.iter_mut().for_each(|v| v.weight = 1.0 / n0);

    let assemble = |active: &[Vertex]| -> Vec<f64> {
        let mut lambda = vec![0.0; sa];
        for v in active {
            for (l, p) in lambda.iter_mut().zip(&v.phi) {
                *l += v.weight * p;
            }
        }
        lambda
    };
    let finish = |active: &[Vertex], lambda: Vec<f64>| OccupancyDesign {
        step: h,
        lambda,
        mixture: active.iter().map(|v| (v.policy.clone(), v.weight)).collect(),
    };

    if unique.is_empty() {
        let lambda = assemble(&active);
        return Ok(DesignSolution {
            design: finish(&active, lambda),
            value: 0.0,
            smoothed_value: 0.0,
            lower_bound: 0.0,
            certified: true,
            binding: None,
            iterations: 0,
            unreachable,
        });
    }
    if unique
        .iter()
        .any(|c| c.iter().enumerate().any(|(i, &ci)| ci > 0.0 && !covered(i)))
    {
        let lambda = assemble(&active);
        return Ok(DesignSolution {
            design: finish(&active, lambda),
            value: f64::INFINITY,
            smoothed_value: f64::INFINITY,
            lower_bound: f64::INFINITY,
            certified: true,
            binding: unreachable.first().copied(),
            iterations: 0,
            unreachable,
        });
    }

    // normalise so the starting value is one
    let lambda = assemble(&active);
    let start = smooth_eval(&unique, &total_mass(&lambda, reg), 1.0).max;
    let scale = start;
    let dirs: Vec<Vec<f64>> = unique.iter().map(|c| c.iter().map(|x| x / scale).collect()).collect();
    let log_n = (dirs.len() as f64).ln();

    let mut stage = 1i32;
    let mut best_ub = f64::INFINITY;
    let mut best_lb = 0.0f64;
    let mut best_design = finish(&active, lambda);
    let mut best_smooth = f64::INFINITY;
    let mut iterations = 0;
    let mut certified = false;

    while iterations < problem.max_iters {
        iterations += 1;
        let lambda = assemble(&active);
        let mass = total_mass(&lambda, reg);
        let eta = 2f64.powf(2.0 * stage as f64 / 5.0) / best_ub.min(1.0).max(1e-300);
        let sm = smooth_eval(&dirs, &mass, eta);

        if sm.max < best_ub {
            best_ub = sm.max;
            best_smooth = sm.smooth;
            best_design = finish(&active, lambda.clone());
        }

        let mut neg_grad = vec![0.0; sa];
        for (c, &q) in dirs.iter().zip(&sm.weights) {
            if q == 0.0 {
                continue;
            }
            for i in 0..sa {
                if c[i] > 0.0 {
                    neg_grad[i] += q * c[i] / (mass[i] * mass[i]);
                }
            }
        }
        let dot = |x: &[f64]| -> f64 { x.iter().zip(&neg_grad).map(|(a, b)| a * b).sum() };
        let (fw_policy, fw_phi, fw_score) = lmo_best_visitation_policy(mdp, h, &neg_grad);
        let here = dot(&lambda);
        let fw_gap = (fw_score - here).max(0.0);

        let weighted: f64 = sm.values.iter().zip(&sm.weights).map(|(g, q)| g * q).sum();
        best_lb = best_lb.max(weighted - fw_gap);
        if best_ub - best_lb <= problem.tol * best_ub {
            certified = true;
            break;
        }
        if fw_gap <= (0.25 * problem.tol * sm.smooth).max(0.5 * log_n / eta) {
            stage += 1;
        }

        // away candidate: active vertex with the lowest score
        let (away_idx, away_score) = active
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot(&v.phi)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let away_gap = here - away_score;

        if fw_gap >= away_gap {
            let d: Vec<f64> = fw_phi.iter().zip(&lambda).map(|(v, l)| v - l).collect();
            let gamma = line_search(&dirs, &mass, &d, 1.0, eta);
            if gamma <= 0.0 {
                stage += 1;
                continue;
            }
            active.iter_mut().for_each(|v| v.weight *= 1.0 - gamma);
            match active.iter_mut().find(|v| v.policy == fw_policy) {
                Some(v) => v.weight += gamma,
                None => active.push(Vertex {
                    policy: fw_policy,
                    phi: fw_phi,
                    weight: gamma,
                }),
            }
        } else {
            let alpha = active[away_idx].weight;
            let gamma_max = if alpha >= 1.0 { 0.0 } else { alpha / (1.0 - alpha) };
            let d: Vec<f64> = lambda.iter().zip(&active[away_idx].phi).map(|(l, v)| l - v).collect();
            let gamma = line_search(&dirs, &mass, &d, gamma_max, eta);
            if gamma <= 0.0 {
                stage += 1;
                continue;
            }
            active.iter_mut().for_each(|v| v.weight *= 1.0 + gamma);
            active[away_idx].weight -= gamma;
            if gamma >= gamma_max {
                active[away_idx].weight = 0.0;
            }
        }
        active.retain(|v| v.weight > 1e-15);
        let total: f64 = active.iter().map(|v| v.weight).sum();
        active.iter_mut().for_each(|v| v.weight /= total);
    }

    if !certified {
        let input = PolishInput {
            mdp,
            step: h,
            dirs: &dirs,
            reg,
            tol: problem.tol,
            rounds: 50,
        };
        let vertices = active.iter().map(|v| (v.policy.clone(), v.phi.clone())).collect();
        let weights: Vec<f64> = active.iter().map(|v| v.weight).collect();
        if let Some(p) = polish(&input, vertices, &weights) {
            best_lb = best_lb.max(p.lower);
            if p.upper < best_ub {
                best_ub = p.upper;
                let lambda = p
                    .vertices
                    .iter()
                    .zip(&p.weights)
                    .fold(vec![0.0; sa], |mut acc, (v, &w)| {
                        acc.iter_mut().zip(&v.1).for_each(|(l, x)| *l += w * x);
                        acc
                    });
                best_design = OccupancyDesign {
                    step: h,
                    lambda,
                    mixture: p.vertices.into_iter().map(|v| v.0).zip(p.weights).collect(),
                };
            }
            certified = best_ub - best_lb <= problem.tol * best_ub;
        }
    }

    let final_mass = total_mass(&best_design.lambda, reg);
    let sm = smooth_eval(&unique, &final_mass, 1.0);
    let binding = sm
        .values
        .iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &g)| if g > acc.1 { (i, g) } else { acc },
        )
        .0;
    Ok(DesignSolution {
        design: best_design,
        value: sm.max,
        smoothed_value: best_smooth * scale,
        lower_bound: best_lb * scale,
        certified,
        binding: Some(owner[binding]),
        iterations,
        unreachable,
    })
}
