//! One path of the finite-n transport SPDE, its deterministic limit and the
//! limit fluctuation X, all driven by the same Brownian modes.

use tnl::detpde::{DriftSpec, TimeMesh};
use tnl::noise::{build_noise_model, Window};
use tnl::spde::{run_coupled, CouplingOptions, LimitPath, Quantity, StochasticRunConfig};
use tnl::spectral::{taylor_green, TorusGrid};

fn main() -> tnl::Result<()> {
    let grid = TorusGrid::new(32)?;
    let f0 = taylor_green(grid);
    let drift = DriftSpec::taylor_green(1.0);
    let mesh = TimeMesh::new(0.1, 2e-4)?.with_saves(5);
    let limit = LimitPath::transport(&f0, &drift, &mesh)?;
    let quantities = vec![Quantity::Lln(1.0), Quantity::Clt(1.4), Quantity::Limit(1.4)];
    for n in [2, 4, 8] {
        let cfg = StochasticRunConfig::new(grid, mesh, build_noise_model(0.5, n, Window::LowPass)?, 7)?;
        let path = run_coupled(&cfg, &limit, &f0, &CouplingOptions::new(quantities.clone()), 0)?;
        println!("n = {n} (eps_n = {:.4})", cfg.epsilon());
        for q in &quantities {
            println!("  {q}: max over t {:.4e}, at T {:.4e}", path.max_over_time(*q), path.final_value(*q));
        }
    }
    Ok(())
}
