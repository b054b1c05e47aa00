//! Data collection: pruning of hard-to-reach states, uniform exploration
//! and online experiment design.

mod backend;
mod objective;
mod optcov;
mod prune;
mod unif;

pub use backend::{BackendMode, ExplorationBackend, Reach};
pub use objective::fw_objective;
pub use optcov::{coverage, optcov, Coverage, EpochProgress, OptCovConfig, OptCovResult};
pub use prune::{prune, PruneResult};
pub use unif::{unif_exp, UnifExpResult};
