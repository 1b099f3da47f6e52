//! A small transport LLN rate experiment: mean squared H^-1 distance to the
//! limit against n, with the log-log fit.

use tnl::cltstats::{run_rate_experiment, theoretical_exponent, ErrorKind, ExponentKind, FitAxis, RateExperiment, System};
use tnl::detpde::DriftSpec;
use tnl::noise::Window;
use tnl::spectral::{taylor_green, TorusGrid};

fn main() -> tnl::Result<()> {
    let grid = TorusGrid::new(32)?;
    let a = theoretical_exponent(ExponentKind::TransportLln, 0.5, 0.0, Some(1.0))?;
    let exp = RateExperiment {
        id: "lln_demo".into(),
        system: System::Transport {
            f0: taylor_green(grid),
            drift: DriftSpec::taylor_green(1.0),
        },
        error: ErrorKind::Lln,
        s: 1.0,
        alpha: 0.5,
        window: Window::LowPass,
        n_list: vec![2, 4, 8],
        paths: 32,
        dt: 2e-4,
        t_final: 0.05,
        saves: 5,
        seed: 1,
        fit_axis: FitAxis::N,
        theory: Some((ExponentKind::TransportLln, a)),
    };
    let est = run_rate_experiment(&exp)?;
    for p in &est.points {
        println!("n = {:2}: E max_t |f^n - f|²_H-1 = {:.4e} ± {:.1e}", p.n, p.mean, p.std_error);
    }
    println!(
        "slope {:.3} [{:.3}, {:.3}], theory {:.3}",
        est.fit.slope, est.fit.ci_low, est.fit.ci_high, -a
    );
    Ok(())
}
