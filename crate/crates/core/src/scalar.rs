//! Scalar abstraction for the deterministic linear-algebra primitives.
//!
//! Everything that is pure arithmetic over probabilities and values (visitations,
//! value functions, U-terms, design norms, the difference recursion) is written
//! against [`Scalar`] so it can run in `f32` or `f64`. Sampling, solvers and the
//! elimination loop work in `f64` through the aliases exported at the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

pub trait Scalar: Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static {
    /// Absolute tolerance used when validating stochastic rows.
    fn stochastic_tol() -> Self;

    fn from_f64_lossy(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any float scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn stochastic_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn stochastic_tol() -> Self {
        // 1e-12 is below f32 resolution; scale with machine epsilon instead.
        64.0 * f32::EPSILON
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerances_are_representable() {
        assert_eq!(f64::stochastic_tol(), 1e-12);
        assert!(f32::stochastic_tol() > f32::EPSILON);
        assert_eq!(f32::from_f64_lossy(0.5), 0.5f32);
    }
}
