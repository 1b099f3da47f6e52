//! Large deviations: rate functional, adjoint-based minimization, lower
//! bounds and tail probabilities.

mod bounds;
mod control;
mod rate;

pub use bounds::{
    control_sweep, lower_bound_check, mollification_stability, single_mode_field, tail_probability_mc, wilson_interval,
    LowerBoundEntry, LowerBoundReport, MollificationEntry, MollificationReport, TailConfig, TailEntry, TailReport,
    DEVIATION_FLOOR,
};
pub use control::{ControlCheckpoint, ControlPath, SparseMode};
pub use rate::{
    evaluate_control, evaluate_euler_control, finite_difference_check, minimize_from, minimize_rate, objective_gradient,
    plant_and_recover, project_control, rate_cost, stationary_control, PlantReport, Evaluation, GradientProbe, MinimizeReport, OptimizerBudget,
    OptimizerStatus, RateProblem, Target, TraceRow,
};

#[cfg(test)]
mod tests;
