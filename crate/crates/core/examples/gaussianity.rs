//! Samples one Fourier coefficient of the limit fluctuation X_T and checks it
//! against a normal law.

use tnl::cltstats::{gaussianity_report, limit_mode_samples, GaussianityThresholds, System};
use tnl::detpde::DriftSpec;
use tnl::spectral::{taylor_green, TorusGrid};

fn main() -> tnl::Result<()> {
    let grid = TorusGrid::new(16)?;
    let system = System::Transport {
        f0: taylor_green(grid),
        drift: DriftSpec::taylor_green(1.0),
    };
    let samples = limit_mode_samples(&system, 0.5, 5e-4, 0.05, (1, 0), 4000, 5)?;
    let r = gaussianity_report(&samples, GaussianityThresholds::default())?;
    println!(
        "{} samples: mean {:.3e}, sd {:.3e}, skewness {:+.3}, excess kurtosis {:+.3}, qq {:.3}, passed {}",
        r.samples, r.mean, r.std_dev, r.skewness, r.excess_kurtosis, r.qq_max_deviation, r.passed
    );
    Ok(())
}
