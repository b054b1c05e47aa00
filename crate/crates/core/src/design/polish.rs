//! Fully corrective refinement of a min-max design: a log-barrier Newton
//! solve restricted to the current vertex set, alternating with LMO pricing
//! of a new vertex under the barrier's dual weights.

use nalgebra::{DMatrix, DVector};

use crate::design::lmo::lmo_best_visitation_policy;
use crate::mdp::{Policy, TabularMdp};

pub(crate) struct PolishInput<'a> {
    pub mdp: &'a TabularMdp<f64>,
    pub step: usize,
    /// Squared directions, already normalised.
    pub dirs: &'a [Vec<f64>],
    pub reg: Option<&'a [f64]>,
    pub tol: f64,
    pub rounds: usize,
}

pub(crate) struct Polished {
    pub vertices: Vec<(Policy<f64>, Vec<f64>)>,
    pub weights: Vec<f64>,
    pub upper: f64,
    pub lower: f64,
    pub certified: bool,
}

fn mass(phis: &[Vec<f64>], alpha: &[f64], reg: Option<&[f64]>) -> Vec<f64> {
    let mut m = reg.map_or_else(|| vec![0.0; phis[0].len()], <[f64]>::to_vec);
    for (phi, &a) in phis.iter().zip(alpha) {
        for (mi, p) in m.iter_mut().zip(phi) {
            *mi += a * p;
        }
    }
    m
}

fn values(dirs: &[Vec<f64>], m: &[f64]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(dirs.len());
    for c in dirs {
        let mut g = 0.0;
        for (&ci, &mi) in c.iter().zip(m) {
            if ci > 0.0 {
                if mi <= 0.0 {
                    return None;
                }
                g += ci / mi;
            }
        }
        out.push(g);
    }
    Some(out)
}

/// Negative gradient of `sum_u q_u g_u` at mass `m`.
fn pricing_weights(dirs: &[Vec<f64>], m: &[f64], q: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; m.len()];
    for (c, &qu) in dirs.iter().zip(q) {
        for i in 0..m.len() {
            if c[i] > 0.0 {
                w[i] += qu * c[i] / (m[i] * m[i]);
            }
        }
    }
    w
}

struct Barrier<'a> {
    phis: &'a [Vec<f64>],
    dirs: &'a [Vec<f64>],
    reg: Option<&'a [f64]>,
}

impl Barrier<'_> {
    /// `tau t - sum_u log(t - g_u) - sum_k log alpha_k`, or `None` outside
    /// the domain.
    fn objective(&self, alpha: &[f64], t: f64, tau: f64) -> Option<f64> {
        if alpha.iter().any(|&a| a <= 0.0) {
            return None;
        }
        let g = values(self.dirs, &mass(self.phis, alpha, self.reg))?;
        let mut f = tau * t - alpha.iter().map(|a| a.ln()).sum::<f64>();
        for gu in g {
            let s = t - gu;
            if s <= 0.0 {
                return None;
            }
            f -= s.ln();
        }
        Some(f)
    }

    /// Newton direction for the barrier problem under `sum alpha = 1`,
    /// with the squared Newton decrement.
    fn newton(&self, alpha: &[f64], t: f64, tau: f64) -> Option<(Vec<f64>, f64, f64)> {
        let k = alpha.len();
        let m = mass(self.phis, alpha, self.reg);
        let g = values(self.dirs, &m)?;
        let s: Vec<f64> = g.iter().map(|gu| t - gu).collect();
        let n = k + 1;
        let mut hess = DMatrix::<f64>::zeros(n + 1, n + 1);
        let mut grad = DVector::<f64>::zeros(n);
        grad[k] = tau;
        // b_i = sum_u c_ui / s_u feeds the curvature of the g_u
        let mut b = vec![0.0; m.len()];
        for (c, &su) in self.dirs.iter().zip(&s) {
            let mut dg = vec![0.0; k];
            for i in 0..m.len() {
                if c[i] > 0.0 {
                    b[i] += c[i] / su;
                    let w = c[i] / (m[i] * m[i]);
                    for (d, phi) in dg.iter_mut().zip(self.phis) {
                        *d -= w * phi[i];
                    }
                }
            }
            grad[k] -= 1.0 / su;
            let inv2 = 1.0 / (su * su);
            for a in 0..k {
                grad[a] += dg[a] / su;
                hess[(a, k)] -= dg[a] * inv2;
                hess[(k, a)] -= dg[a] * inv2;
                for c2 in 0..k {
                    hess[(a, c2)] += dg[a] * dg[c2] * inv2;
                }
            }
            hess[(k, k)] += inv2;
        }
        for i in 0..m.len() {
            if b[i] == 0.0 {
                continue;
            }
            let w = 2.0 * b[i] / (m[i] * m[i] * m[i]);
            for a in 0..k {
                let pa = self.phis[a][i];
                if pa == 0.0 {
                    continue;
                }
                for c2 in 0..k {
                    hess[(a, c2)] += w * pa * self.phis[c2][i];
                }
            }
        }
        for a in 0..k {
            grad[a] -= 1.0 / alpha[a];
            hess[(a, a)] += 1.0 / (alpha[a] * alpha[a]);
            hess[(a, n)] = 1.0;
            hess[(n, a)] = 1.0;
        }
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            rhs[i] = -grad[i];
        }
        let sol = hess.lu().solve(&rhs)?;
        let step: Vec<f64> = (0..n).map(|i| sol[i]).collect();
        let decrement = -(0..n).map(|i| grad[i] * step[i]).sum::<f64>();
        let dt = step[k];
        Some((step[..k].to_vec(), dt, decrement))
    }

    /// Follows the central path from `(alpha, t)`; returns the final point
    /// and the dual weights `1 / (tau s_u)`, normalised.
    fn solve(&self, mut alpha: Vec<f64>, tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let g0 = values(self.dirs, &mass(self.phis, &alpha, self.reg))?;
        let top = g0.iter().copied().fold(0.0, f64::max);
        let mut t = top * 1.1 + 1e-3;
        let constraints = (self.dirs.len() + alpha.len()) as f64;
        let mut tau = constraints / top.max(1e-12);
        for _ in 0..40 {
            for _ in 0..100 {
                let (da, dt, dec) = self.newton(&alpha, t, tau)?;
                if dec / 2.0 <= 1e-12 {
                    break;
                }
                let f0 = self.objective(&alpha, t, tau)?;
                let mut step = 1.0;
                loop {
                    let trial: Vec<f64> = alpha.iter().zip(&da).map(|(a, d)| a + step * d).collect();
                    let tt = t + step * dt;
                    if let Some(f) = self.objective(&trial, tt, tau) {
                        if f <= f0 - 0.25 * step * dec {
                            alpha = trial;
                            t = tt;
                            break;
                        }
                    }
                    step *= 0.5;
                    if step < 1e-14 {
                        return None;
                    }
                }
            }
            if constraints / tau <= 0.05 * tol * t {
                break;
            }
            tau *= 8.0;
        }
        let g = values(self.dirs, &mass(self.phis, &alpha, self.reg))?;
        let mut q: Vec<f64> = g.iter().map(|gu| 1.0 / (tau * (t - gu))).collect();
        let z: f64 = q.iter().sum();
        q.iter_mut().for_each(|x| *x /= z);
        Some((alpha, q))
    }
}

/// Alternates restricted barrier solves with LMO pricing. `None` when the
/// restricted problem cannot be solved numerically.
pub(crate) fn polish(
    input: &PolishInput<'_>,
    mut vertices: Vec<(Policy<f64>, Vec<f64>)>,
    weights: &[f64],
) -> Option<Polished> {
    let k0 = vertices.len() as f64;
    let mut alpha: Vec<f64> = weights.iter().map(|w| 0.9 * w + 0.1 / k0).collect();
    let mut best: Option<Polished> = None;
    let mut lower = f64::NEG_INFINITY;
    for _ in 0..input.rounds {
        let phis: Vec<Vec<f64>> = vertices.iter().map(|v| v.1.clone()).collect();
        let barrier = Barrier {
            phis: &phis,
            dirs: input.dirs,
            reg: input.reg,
        };
        let (a, q) = barrier.solve(alpha, input.tol)?;
        let m = mass(&phis, &a, input.reg);
        let g = values(input.dirs, &m)?;
        let upper = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w = pricing_weights(input.dirs, &m, &q);
        let (policy, phi, score) = lmo_best_visitation_policy(input.mdp, input.step, &w);
        let lambda = mass(&phis, &a, None);
        let here: f64 = lambda.iter().zip(&w).map(|(l, x)| l * x).sum();
        let weighted: f64 = g.iter().zip(&q).map(|(gu, qu)| gu * qu).sum();
        lower = lower.max(weighted - (score - here).max(0.0));
        if best.as_ref().is_none_or(|b| upper < b.upper) {
            best = Some(Polished {
                vertices: vertices.clone(),
                weights: a.clone(),
                upper,
                lower,
                certified: false,
            });
        }
        let b = best.as_mut().expect("set above");
        b.lower = lower;
        if b.upper - lower <= input.tol * b.upper {
            b.certified = true;
            break;
        }
        if vertices.iter().any(|v| v.0 == policy) {
            break;
        }
        let k = vertices.len() as f64 + 1.0;
        alpha = a.iter().map(|x| x * (1.0 - 1.0 / k)).collect();
        alpha.push(1.0 / k);
        vertices.push((policy, phi));
    }
    best
}
