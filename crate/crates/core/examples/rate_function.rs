//! Plants a control with a known terminal state, recovers its cost with the
//! adjoint optimizer and probes the gradient.

use tnl::checks::{gradient_probes, ldp_base_problem, ldp_plant_multiplier, lower_bound_stability};
use tnl::ldp::{plant_and_recover, OptimizerBudget};

fn main() -> tnl::Result<()> {
    let base = ldp_base_problem()?.with_budget(OptimizerBudget {
        max_iterations: 300,
        ..Default::default()
    });
    let mu = ldp_plant_multiplier(base.grid(), 1.0)?;
    let plant = plant_and_recover(&base, &mu, 1e8, 200)?;
    let trace = &plant.report.trace;
    for row in trace.iter().step_by(50) {
        println!("iter {:3}: objective {:.6e}", row.iteration, row.objective);
    }
    println!(
        "planted cost {:.6e}, recovered upper bound {:.6e} ({:+.4}%), status {:?}",
        plant.planted_cost,
        plant.report.upper_bound,
        100.0 * plant.relative_gap,
        plant.report.status
    );
    let worst = gradient_probes(&plant, 0)?.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    println!("adjoint vs central differences: max relative error {worst:.2e}");
    let (r10, r20) = lower_bound_stability(0)?;
    println!("lower-bound sweep: min ratio {r10:.4e} (10 controls), {r20:.4e} (20 controls)");
    Ok(())
}
