//! Experiment design over step-`h` occupancy measures and the complexity
//! measures built on it.

mod closed;
mod kl;
mod lmo;
mod measures;
mod oracle;
mod polish;
mod solver;
mod value;

pub use closed::{closed_form_action_independent, closed_form_contextual};
pub use kl::{categorical_kl, kl_sample_lower_bound, KlCell, KlReport};
pub use lmo::{lmo_best_visitation_policy, max_reachability, reach_policy, step_visitation};
pub use measures::{
    measure, measure_directions, pedel_complexity, pedel_single, reports_to_csv, rho_pi, u_complexity,
    ComplexityReport, Measure, MeasureConfig, MeasureReport, StepValue,
};
pub use oracle::{brute_force_design, enumerate_vertices, BruteForceDesign};
pub use solver::{solve_min_max_design, DesignProblem, DesignSolution, Direction, DirectionKind, OccupancyDesign};
pub use value::{design_value, weighted_design_value};
