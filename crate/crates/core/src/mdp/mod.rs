//! Tabular episodic MDPs, policies and the exact visitation/value primitives.

mod model;
mod policy;
mod visitation;

pub use model::{RewardFamily, TabularMdp};
pub use policy::{all_deterministic, Policy};
pub(crate) use visitation::u_from_parts;
pub use visitation::{
    compute_u, forward_visitations, gap_profile, performance_difference, value_functions, GapProfile, UTerm,
    ValueProfile, VisitationProfile,
};
