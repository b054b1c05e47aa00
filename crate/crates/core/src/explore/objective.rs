use crate::error::{check_dim, Error, Result};

/// `f(L) = (1/eta) log sum_phi exp(eta ||phi||^2_{(L + L0)^-1})` for diagonal
/// `L`, `L0`, with its gradient in the diagonal of `L`.
///
/// Each direction's gradient is `-phi^2 / (L + L0)^2`, weighted by the
/// softmax of the norms.
pub fn fw_objective(eta: f64, phis: &[Vec<f64>], lambda: &[f64], lambda0: &[f64]) -> Result<(f64, Vec<f64>)> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Config(format!("eta must be positive and finite, got {eta}")));
    }
    if phis.is_empty() {
        return Err(Error::Config("objective needs at least one direction".into()));
    }
    let d = lambda.len();
    check_dim("regularizer length", d, lambda0.len())?;
    let denom: Vec<f64> = lambda.iter().zip(lambda0).map(|(x, y)| x + y).collect();
    let mut norms = Vec::with_capacity(phis.len());
    for phi in phis {
        check_dim("direction length", d, phi.len())?;
        let mut n = 0.0;
        for (i, (&p, &q)) in phi.iter().zip(&denom).enumerate() {
            if p == 0.0 {
                continue;
            }
            if q <= 0.0 {
                return Err(Error::Config(format!(
                    "design is not positive on coordinate {i} of a direction's support"
                )));
            }
            n += p * p / q;
        }
        norms.push(n);
    }
    let top = norms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = norms.iter().map(|&n| (eta * (n - top)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let value = top + total.ln() / eta;
    let mut grad = vec![0.0; d];
    for (phi, &w) in phis.iter().zip(&weights) {
        let soft = w / total;
        if soft == 0.0 {
            continue;
        }
        for ((g, &p), &q) in grad.iter_mut().zip(phi).zip(&denom) {
            if p != 0.0 {
                *g -= soft * p * p / (q * q);
            }
        }
    }
    Ok((value, grad))
}
