//! Seeded trial runner and side-by-side checks of the closed-form claims
//! on the two-step instance.

mod lemmas;
mod trials;

pub use lemmas::{
    comparison_instance, comparison_rows, raw_designs, rows_to_csv, verify_lemmas, CheckStatus, LemmaRow, Relation,
};
pub use trials::{run_trials, wilson_interval, TrialReport, TrialRow, TrialSummary};
