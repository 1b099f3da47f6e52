//! Exceedance probability of the sup-in-time H^-δ distance to the limit,
//! coupled across n.

use tnl::detpde::DriftSpec;
use tnl::ldp::{tail_probability_mc, TailConfig};
use tnl::noise::Window;
use tnl::spectral::{taylor_green, TorusGrid};

fn main() -> tnl::Result<()> {
    let cfg = TailConfig {
        grid_n: 32,
        dt: 2e-4,
        t_final: 0.05,
        saves: 5,
        alpha: 0.5,
        n_list: vec![2, 4, 8],
        window: Window::LowPass,
        radius: 0.08,
        delta: 1.5,
        paths: 200,
        seed: 9,
    };
    let f0 = taylor_green(TorusGrid::new(cfg.grid_n)?);
    let report = tail_probability_mc(&f0, &DriftSpec::taylor_green(1.0), &cfg)?;
    for e in &report.entries {
        println!(
            "n = {}: p = {:.3} [{:.3}, {:.3}], eps log p = {:?}",
            e.n, e.p_hat, e.ci_low, e.ci_high, e.eps_log_p
        );
    }
    println!("strictly decreasing: {}", report.strictly_decreasing());
    Ok(())
}
