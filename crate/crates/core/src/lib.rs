//! PAC policy identification for tabular episodic MDPs.
//!
//! Exact visitation and value primitives live in [`mdp`], experiment-design
//! solvers and complexity measures in [`design`], the reference-policy
//! difference estimator in [`estimator`], data collection in [`explore`],
//! the elimination algorithm in [`perp`] and the simulator, trial runner and
//! lemma checks in [`harness`].
//!
//! The deterministic primitives are generic over [`Scalar`]; the sampling
//! and solver layers work in `f64`, for which the aliases below are provided.

pub mod design;
pub mod error;
pub mod estimator;
pub mod explore;
pub mod harness;
pub mod instances;
pub mod io;
pub mod mdp;
pub mod perp;
mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Mdp = mdp::TabularMdp<f64>;
pub type Policy = mdp::Policy<f64>;
pub type Visitations = mdp::VisitationProfile<f64>;
pub type Values = mdp::ValueProfile<f64>;
