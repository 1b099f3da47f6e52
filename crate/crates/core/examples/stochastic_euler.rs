//! Stochastic Euler vorticity with transport noise: the path average tracks
//! the Navier–Stokes limit as n grows.

use rayon::prelude::*;
use tnl::detpde::{solve_nse_vorticity, TimeMesh};
use tnl::noise::{build_noise_model, Window};
use tnl::rng::derive_seed;
use tnl::spde::{run_stochastic_euler, StochasticRunConfig};
use tnl::spectral::{sobolev_norm, SpectralField, TorusGrid, TWO_PI};

fn main() -> tnl::Result<()> {
    let grid = TorusGrid::new(32)?;
    let xi0 = SpectralField::from_fn(grid, |x, y| {
        (TWO_PI * x).sin() * (TWO_PI * y).sin() + 0.5 * (TWO_PI * (x + 2.0 * y)).cos()
    });
    let mesh = TimeMesh::new(0.05, 2e-4)?.with_saves(1);
    let limit = solve_nse_vorticity(&xi0, &mesh)?;
    let paths = 32;
    for n in [2, 4, 8] {
        let base = StochasticRunConfig::new(grid, mesh, build_noise_model(0.5, n, Window::LowPass)?, 3)?;
        let finals = (0..paths)
            .into_par_iter()
            .map(|p| Ok(run_stochastic_euler(&xi0, &base.clone().with_seed(derive_seed(3, p)))?.last().clone()))
            .collect::<tnl::Result<Vec<_>>>()?;
        let mut mean = SpectralField::zeros(grid);
        for f in &finals {
            mean.axpy(1.0 / paths as f64, f);
        }
        let spread = finals.iter().map(|f| sobolev_norm(&(f - limit.last()), -1.0)).sum::<f64>() / paths as f64;
        println!(
            "n = {n}: |mean - limit|_H-1 = {:.3e}, mean path distance {:.3e}",
            sobolev_norm(&(&mean - limit.last()), -1.0),
            spread
        );
    }
    Ok(())
}
