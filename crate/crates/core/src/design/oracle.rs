use crate::design::lmo::step_visitation;
use crate::design::solver::Direction;
use crate::design::value::weighted_design_value;
use crate::error::{check_dim, Error, Result};
use crate::mdp::{Policy, TabularMdp};

/// Result of the enumeration oracle.
#[derive(Clone, Debug)]
pub struct BruteForceDesign {
    pub value: f64,
    /// Distinct step-`h` visitation vectors of deterministic policies.
    pub vertices: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

/// Distinct step-`h` state-action visitations over every deterministic
/// policy (actions after step `h` are irrelevant and fixed to 0).
pub fn enumerate_vertices(mdp: &TabularMdp<f64>, h: usize, limit: usize) -> Result<Vec<Vec<f64>>> {
    let (s_n, a_n, h_n) = (mdp.num_states(), mdp.num_actions(), mdp.horizon());
    let cells = s_n * (h + 1);
    let count = (a_n as u128).checked_pow(cells as u32);
    if !count.is_some_and(|c| c <= limit as u128) {
        return Err(Error::Unsupported(format!(
            "{a_n}^{cells} policies exceeds the limit of {limit}"
        )));
    }
    let mut table = vec![0usize; h_n * s_n];
    let mut out: Vec<Vec<f64>> = Vec::new();
    loop {
        let pi = Policy::deterministic(s_n, a_n, h_n, table.clone())?;
        let phi = step_visitation(mdp, &pi, h);
        if !out
            .iter()
            .any(|v| v.iter().zip(&phi).all(|(a, b)| (a - b).abs() <= 1e-15))
        {
            out.push(phi);
        }
        let mut pos = 0;
        loop {
            if pos == cells {
                return Ok(out);
            }
            table[pos] += 1;
            if table[pos] < a_n {
                break;
            }
            table[pos] = 0;
            pos += 1;
        }
    }
}

/// Euclidean projection onto the probability simplex.
fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut acc = 0.0;
    let mut theta = 0.0;
    for (j, &x) in u.iter().enumerate() {
        acc += x;
        let t = (acc - 1.0) / (j + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

fn mix(vertices: &[Vec<f64>], w: &[f64]) -> Vec<f64> {
    let mut lambda = vec![0.0; vertices[0].len()];
    for (v, &a) in vertices.iter().zip(w) {
        for (l, x) in lambda.iter_mut().zip(v) {
            *l += a * x;
        }
    }
    lambda
}

fn objective(dirs: &[Direction], lambda: &[f64]) -> (f64, usize) {
    dirs.iter()
        .enumerate()
        .map(|(i, d)| (weighted_design_value(lambda, None, d.squared.iter().copied()), i))
        .fold((f64::NEG_INFINITY, 0), |acc, x| if x.0 > acc.0 { x } else { acc })
}

/// Slow reference for [`solve_min_max_design`](crate::design::solve_min_max_design):
/// projected subgradient descent over mixture weights of the enumerated
/// vertices, `iters` steps of size `0.5 / sqrt(t)` along the normalised
/// subgradient, keeping the best iterate.
pub fn brute_force_design(
    mdp: &TabularMdp<f64>,
    h: usize,
    dirs: &[Direction],
    iters: usize,
) -> Result<BruteForceDesign> {
    if dirs.is_empty() {
        return Err(Error::Config("design needs at least one direction".into()));
    }
    for d in dirs {
        check_dim("design direction", mdp.sa_len(), d.squared.len())?;
    }
    let vertices = enumerate_vertices(mdp, h, 1 << 20)?;
    let k = vertices.len();
    let mut w = vec![1.0 / k as f64; k];
    let (mut best, _) = objective(dirs, &mix(&vertices, &w));
    let mut best_w = w.clone();
    if !best.is_finite() {
        return Ok(BruteForceDesign {
            value: best,
            vertices,
            weights: best_w,
        });
    }
    for t in 1..=iters {
        let lambda = mix(&vertices, &w);
        let (_, u) = objective(dirs, &lambda);
        let c = &dirs[u].squared;
        let grad: Vec<f64> = vertices
            .iter()
            .map(|v| {
                -c.iter()
                    .zip(v)
                    .zip(&lambda)
                    .filter(|((&ci, _), _)| ci > 0.0)
                    .map(|((ci, vi), l)| ci * vi / (l * l))
                    .sum::<f64>()
            })
            .collect();
        let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let mut step = 0.5 / (t as f64).sqrt() / norm;
        for _ in 0..40 {
            let next = project_simplex(&w.iter().zip(&grad).map(|(a, g)| a - step * g).collect::<Vec<_>>());
            let (val, _) = objective(dirs, &mix(&vertices, &next));
            if val.is_finite() {
                if val < best {
                    best = val;
                    best_w = next.clone();
                }
                w = next;
                break;
            }
            step *= 0.5;
        }
    }
    Ok(BruteForceDesign {
        value: best,
        vertices,
        weights: best_w,
    })
}
