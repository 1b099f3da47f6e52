//! Taylor–Green decay under the vorticity solver, and forward/backward duality
//! of the advection–diffusion propagator.

use tnl::checks::{dual_pair, taylor_green_decay};
use tnl::detpde::{solve_advection_diffusion, DriftSpec, TimeMesh};
use tnl::spectral::{sobolev_norm, SpectralField, TorusGrid, TWO_PI};

fn main() -> tnl::Result<()> {
    let err = taylor_green_decay(32, 0.1, 1e-4)?;
    println!("Taylor–Green: max relative error vs exp(-8π²t) = {err:.2e}");

    let grid = TorusGrid::new(64)?;
    let f0 = SpectralField::from_fn(grid, |x, y| (TWO_PI * x).cos() + 0.3 * (TWO_PI * (2.0 * x - y)).cos());
    let mesh = TimeMesh::new(0.1, 1e-4)?.with_saves(5);
    let traj = solve_advection_diffusion(&f0, &DriftSpec::taylor_green(1.0), &mesh)?;
    for (t, f) in traj.times().iter().zip(traj.fields()) {
        println!("t = {t:.3}: |f|_L2 = {:.6}, |f|_H-1 = {:.6}", f.l2_norm(), sobolev_norm(f, -1.0));
    }

    for c in dual_pair(64, 1e-4)? {
        println!(
            "dt = {:.0e}: duality error {:.2e}, composition error {:.2e}",
            c.dt, c.duality_error, c.composition_error
        );
    }
    Ok(())
}
