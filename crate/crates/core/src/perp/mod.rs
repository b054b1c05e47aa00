//! Policy elimination with a reference policy.

mod reference;
mod run;
mod schedule;

pub use reference::{eliminate, select_reference, u_hat, u_table};
pub use run::{perp, EpisodeBreakdown, EpochRecord, PerpConfig, PerpReport, PerpStatus, StepRecord};
pub use schedule::{beta_ell, epoch_limit, epoch_schedule, eps_exp, reference_budget, Schedule};
