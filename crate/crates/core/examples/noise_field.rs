//! Kraichnan-type transport noise: normalization, one sampled increment and
//! the Itô variance of a fixed test field.

use tnl::noise::{build_noise_model, ito_integral_variance, BrownianDriver, NoiseSampler, Window};
use tnl::spectral::{SpectralField, TorusGrid, VectorField, TWO_PI};

fn main() -> tnl::Result<()> {
    let grid = TorusGrid::new(32)?;
    for window in [Window::LowPass, Window::Band] {
        for n in [2, 4, 8] {
            let model = build_noise_model(0.5, n, window)?;
            println!("{window:?} n = {n}: {} modes, eps_n = {:.6}", model.modes().len(), model.epsilon());
        }
    }

    let model = build_noise_model(0.5, 4, Window::LowPass)?;
    let sampler = NoiseSampler::new(&model, grid)?;
    let driver = BrownianDriver::new(42);
    let dw = sampler.field_at(&driver, 0, 1e-3);
    println!(
        "increment: |dW|_L2 = {:.4e}, divergence residual {:.1e}, reality residue {:.1e}",
        dw.l2_norm(),
        dw.divergence_residual(),
        dw.reality_residue()
    );

    let f = VectorField::new(
        SpectralField::from_fn(grid, |_, y| (TWO_PI * y).cos()),
        SpectralField::from_fn(grid, |x, _| (2.0 * TWO_PI * x).sin()),
    )?;
    let path = vec![f; 10];
    println!("Var ∫<f, dW> over 10 steps of 1e-2: {:.6e}", ito_integral_variance(&model, &path, 1e-2));
    Ok(())
}
