use serde::Serialize;

use crate::error::{Error, Result};

/// Per-epoch tolerances.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Schedule {
    pub epoch: u32,
    /// `eps_l = 2^-l`.
    pub eps: f64,
    /// `eps_l / (64 S^{3/2} H^2)`.
    pub eps_unif: f64,
    /// `eps_l^{-2/3} / eps_unif`.
    pub k_unif: f64,
}

pub fn epoch_schedule(epoch: u32, num_states: usize, horizon: usize) -> Schedule {
    let eps = 2f64.powi(-(epoch as i32));
    let (s, h) = (num_states as f64, horizon as f64);
    let eps_unif = eps / (64.0 * s.powf(1.5) * h * h);
    let k_unif = eps.powf(-2.0 / 3.0) / eps_unif;
    Schedule {
        epoch,
        eps,
        eps_unif,
        k_unif,
    }
}

/// `ceil(log2(16 / eps))`.
pub fn epoch_limit(eps: f64) -> u32 {
    (16.0 / eps).log2().ceil() as u32
}

/// `sqrt(2 log(60 S H^2 l^2 |Pi| / kappa))
///   + (4/3) sqrt(SA / (eps_unif K_unif)) log(60 H^2 l^2 |Pi| / kappa)`.
#[allow(clippy::too_many_arguments)]
pub fn beta_ell(
    epoch: u32,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_policies: usize,
    eps_unif: f64,
    k_unif: f64,
    kappa: f64,
) -> f64 {
    let (s, a, h) = (num_states as f64, num_actions as f64, horizon as f64);
    let l2 = f64::from(epoch).powi(2);
    let pi = num_policies as f64;
    (2.0 * (60.0 * s * h * h * l2 * pi / kappa).ln()).sqrt()
        + 4.0 / 3.0 * (s * a / (eps_unif * k_unif)).sqrt() * (60.0 * h * h * l2 * pi / kappa).ln()
}

/// `eps_l^2 / (H^4 beta_l^2)`.
pub fn eps_exp(eps: f64, horizon: usize, beta: f64) -> f64 {
    eps * eps / ((horizon as f64).powi(4) * beta * beta)
}

/// Reference rollouts
/// `c (H U_max + H^4 S^{3/2} sqrt(A) log(SAH l^2/kappa) eps_l^{1/3} + S^2 H^4 eps_unif)
///  / eps_l^2 * log(60 H l^2 |Pi| / kappa)`, rounded up, where `U_max` is the
/// largest estimated `U(pi, pibar)` over the active set.
#[allow(clippy::too_many_arguments)]
pub fn reference_budget(
    sched: &Schedule,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    num_policies: usize,
    u_max: f64,
    kappa: f64,
    c: f64,
) -> Result<u64> {
    if !(u_max >= 0.0 && u_max.is_finite()) {
        return Err(Error::Config(format!(
            "U estimate must be finite and nonnegative, got {u_max}"
        )));
    }
    let (s, a, h) = (num_states as f64, num_actions as f64, horizon as f64);
    let l2 = f64::from(sched.epoch).powi(2);
    let h4 = h.powi(4);
    let inner = h * u_max
        + h4 * s.powf(1.5) * a.sqrt() * (s * a * h * l2 / kappa).ln() * sched.eps.cbrt()
        + s * s * h4 * sched.eps_unif;
    let n = c * inner / (sched.eps * sched.eps) * (60.0 * h * l2 * num_policies as f64 / kappa).ln();
    if n > u64::MAX as f64 / 4.0 {
        return Err(Error::Config(format!("reference budget {n:.3e} is out of range")));
    }
    Ok(n.ceil().max(1.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_formulas() {
        let s = epoch_schedule(3, 4, 2);
        assert_eq!(s.eps, 0.125);
        assert!((s.eps_unif - 0.125 / (64.0 * 8.0 * 4.0)).abs() < 1e-18);
        // K_unif eps_unif = eps^{-2/3}
        assert!((s.k_unif * s.eps_unif - 0.125f64.powf(-2.0 / 3.0)).abs() < 1e-9);
        assert_eq!(epoch_limit(0.02), 10);
        assert_eq!(epoch_limit(1.0), 4);
    }

    #[test]
    fn beta_regression_value() {
        // S = A = H = 1, one policy, l = 1, kappa = 1/2
        let s = epoch_schedule(1, 1, 1);
        let b = beta_ell(1, 1, 1, 1, 1, s.eps_unif, s.k_unif, 0.5);
        let expected = (2.0 * 120f64.ln()).sqrt() + 4.0 / 3.0 * 0.5f64.powf(1.0 / 3.0) * 120f64.ln();
        assert!((b - expected).abs() < 1e-12);
        assert!((b - 8.160_793_306_723_715).abs() < 1e-9, "{b}");
    }

    #[test]
    fn beta_grows_with_epoch() {
        let s = epoch_schedule(2, 3, 2);
        let b: Vec<f64> = (1..6)
            .map(|l| beta_ell(l, 3, 2, 2, 5, s.eps_unif, s.k_unif, 0.1))
            .collect();
        assert!(b.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn reference_budget_increases_with_epoch() {
        let n: Vec<u64> = (1..=6)
            .map(|l| reference_budget(&epoch_schedule(l, 4, 2), 4, 3, 2, 2, 0.0, 0.05, 1.0).unwrap())
            .collect();
        assert!(n.windows(2).all(|w| w[1] > w[0]), "{n:?}");
    }

    #[test]
    fn reference_budget_leading_term() {
        let sched = epoch_schedule(4, 4, 2);
        let base = reference_budget(&sched, 4, 3, 2, 2, 0.0, 0.05, 1.0).unwrap() as f64;
        let with_u = reference_budget(&sched, 4, 3, 2, 2, 0.3, 0.05, 1.0).unwrap() as f64;
        let log = (60.0 * 2.0 * 16.0 * 2.0 / 0.05f64).ln();
        let lead = 2.0 * 0.3 / sched.eps.powi(2) * log;
        assert!((with_u - base - lead).abs() <= 2.0);
    }

    #[test]
    fn eps_exp_formula() {
        assert!((eps_exp(0.5, 2, 3.0) - 0.25 / (16.0 * 9.0)).abs() < 1e-15);
    }
}
