//! Reference-policy difference estimation from logged episodes.

mod dataset;
mod diff;

pub use dataset::{EpisodeDataset, Transition};
pub use diff::{
    d_hat, delta_recursion, estimate_differences, estimate_model, estimate_reference, mean_return, off_policy_value,
    step_direction, sufficient_sample_sizes, DifferenceEstimate, EmpiricalModel,
};
