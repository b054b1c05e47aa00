use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mdp::{compute_u, forward_visitations, u_from_parts, value_functions, Policy, TabularMdp};

/// `U(pi, pibar)` evaluated exactly on an estimated model.
pub fn u_hat(model: &TabularMdp<f64>, pi: &Policy<f64>, pibar: &Policy<f64>) -> Result<f64> {
    Ok(compute_u(model, pi, pibar)?.total)
}

/// `table[i][j] = U_hat(pi_i, pi_j)` for all pairs.
pub fn u_table(model: &TabularMdp<f64>, policies: &[Policy<f64>]) -> Result<Vec<Vec<f64>>> {
    let qs: Vec<Vec<Vec<f64>>> = policies
        .par_iter()
        .map(|p| value_functions(model, p).map(|v| v.q))
        .collect::<Result<_>>()?;
    let ws: Vec<Vec<Vec<f64>>> = policies
        .par_iter()
        .map(|p| forward_visitations(model, p).map(|v| v.w))
        .collect::<Result<_>>()?;
    let a_n = model.num_actions();
    Ok(policies
        .par_iter()
        .zip(&qs)
        .map(|(pi, q)| {
            policies
                .iter()
                .zip(&ws)
                .map(|(pibar, w)| u_from_parts(a_n, pi, pibar, q, w).total)
                .collect()
        })
        .collect())
}

/// Position in `candidates` minimising `max_i table[i][j]` over the active
/// rows; near-ties go to the lowest position.
pub fn select_reference(table: &[Vec<f64>], candidates: &[usize]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Config("reference selection needs a nonempty policy set".into()));
    }
    let worst: Vec<f64> = candidates
        .iter()
        .map(|&j| {
            candidates
                .iter()
                .map(|&i| table[i][j])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mut best = 0;
    for (k, &w) in worst.iter().enumerate().skip(1) {
        let slack = 1e-12 * worst[best].abs().max(1.0);
        if w < worst[best] - slack {
            best = k;
        }
    }
    Ok(best)
}

/// Survivors of `max D_hat - D_hat(pi) > 8 eps_l`, as positions into `d_hat`.
pub fn eliminate(d_hat: &[f64], eps_l: f64) -> Result<Vec<usize>> {
    if d_hat.iter().any(|d| !d.is_finite()) {
        return Err(Error::Internal("difference estimates must be finite".into()));
    }
    let top = d_hat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let keep: Vec<usize> = (0..d_hat.len()).filter(|&i| !(top - d_hat[i] > 8.0 * eps_l)).collect();
    if keep.is_empty() {
        return Err(Error::Internal("elimination removed every policy".into()));
    }
    Ok(keep)
}
