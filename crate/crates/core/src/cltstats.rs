//! Monte Carlo error moments across `n`, log-log rate fits and Gaussianity
//! diagnostics.

use std::io::Write as _;
use std::path::Path;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detpde::{DriftSpec, TimeMesh};
use crate::error::{invalid, Error, Result};
use crate::noise::{build_noise_model, Window};
use crate::rng::derive_seed;
use crate::spde::{
    run_coupled, run_fluctuation_euler, run_fluctuation_transport, CouplingOptions, LimitPath, Quantity,
    StochasticRunConfig,
};
use crate::spectral::{SpectralField, TorusGrid};

/// Spatial dimension of the torus.
pub const DIM: f64 = 2.0;

/// Abort fraction above which an experiment fails.
pub const MAX_ABORT_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentKind {
    /// `‖f^n - f̄‖²_{H^{-δ}}`, `δ ∈ (0, d/2]`
    #[serde(alias = "transport_LLN")]
    TransportLln,
    /// `‖X^n - X‖²` in `H^{-d/2-1}` with the largest admissible rate
    #[serde(alias = "transport_CLT")]
    TransportClt,
    /// `‖X^n - X‖²` in `H^{-d/2-δ-}`, `0 < δ < α ∧ (1-γ)`
    #[serde(alias = "transport_CLT_general")]
    TransportCltGeneral,
    /// `‖Ξ^n - Ξ‖²_{H^{β-1}}`, `β ∈ (0, α)`
    #[serde(alias = "euler_CLT")]
    EulerClt,
    /// `‖Ξ^n - Ξ‖²_{H^{-1}}`
    #[serde(alias = "euler_CLT_Hminus1")]
    EulerCltHminus1,
}

impl ExponentKind {
    pub fn formula_id(self) -> &'static str {
        match self {
            ExponentKind::TransportLln => "2*delta*(1-2*alpha/d)",
            ExponentKind::TransportClt => "2*min(alpha,1-gamma)*(1-2*alpha/d)",
            ExponentKind::TransportCltGeneral => "2*delta*(1-2*alpha/d)",
            ExponentKind::EulerClt => "2*min(beta,alpha-beta)*(1-alpha)",
            ExponentKind::EulerCltHminus1 => "alpha*(1-alpha)",
        }
    }
}

/// Decay exponent `a` in `E‖error‖² ≲ n^{-a}`.
///
/// `param` is `δ` for the transport kinds and `β` for [`ExponentKind::EulerClt`].
pub fn theoretical_exponent(kind: ExponentKind, alpha: f64, gamma_b: f64, param: Option<f64>) -> Result<f64> {
    if !(alpha > 0.0 && alpha < DIM / 2.0) {
        return Err(invalid("alpha", format!("must satisfy 0 < alpha < d/2 = 1, got {alpha}")));
    }
    if !(0.0..1.0).contains(&gamma_b) {
        return Err(invalid(
            "gamma_b",
            format!("must satisfy 0 <= gamma_b = 2/q + d/p < 1, got {gamma_b}"),
        ));
    }
    let need = |name: &'static str| param.ok_or_else(|| invalid(name, "required for this kind"));
    let spread = 1.0 - 2.0 * alpha / DIM;
    match kind {
        ExponentKind::TransportLln => {
            let delta = need("delta")?;
            if !(delta > 0.0 && delta <= DIM / 2.0) {
                return Err(invalid("delta", format!("must satisfy 0 < delta <= d/2 = 1, got {delta}")));
            }
            Ok(2.0 * delta * spread)
        }
        ExponentKind::TransportClt => Ok(2.0 * alpha.min(1.0 - gamma_b) * spread),
        ExponentKind::TransportCltGeneral => {
            let delta = need("delta")?;
            let cap = alpha.min(1.0 - gamma_b);
            if !(delta > 0.0 && delta < cap) {
                return Err(invalid(
                    "delta",
                    format!("must satisfy 0 < delta < min(alpha, 1 - gamma_b) = {cap}, got {delta}"),
                ));
            }
            Ok(2.0 * delta * spread)
        }
        ExponentKind::EulerClt => {
            let beta = need("beta")?;
            if !(beta > 0.0 && beta < alpha) {
                return Err(invalid("beta", format!("must satisfy 0 < beta < alpha = {alpha}, got {beta}")));
            }
            Ok(2.0 * beta.min(alpha - beta) * (1.0 - alpha))
        }
        ExponentKind::EulerCltHminus1 => Ok(alpha * (1.0 - alpha)),
    }
}

/// Least-squares fit of `ln y = c + slope · ln x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// 95% interval from the Monte Carlo standard errors propagated through
    /// the OLS weights.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Residual standard error of the slope (`NaN` with fewer than three points).
    pub residual_se: f64,
}

/// `ys` must be positive; `ses` are standard errors of `ys` (zeros allowed).
pub fn fit_power_law(xs: &[f64], ys: &[f64], ses: &[f64]) -> Result<SlopeFit> {
    if xs.len() < 2 || xs.len() != ys.len() || ys.len() != ses.len() {
        return Err(invalid("fit", "needs at least two matching (x, y, se) points"));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(invalid("fit", "log-log fit needs positive data"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("fit", "abscissae must not all coincide"));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // Var(ln ȳ) ≈ (se/ȳ)²
    let var_mc: f64 = lx
        .iter()
        .zip(ys.iter().zip(ses))
        .map(|(x, (y, se))| ((x - mx) / sxx).powi(2) * (se / y).powi(2))
        .sum();
    let half = 1.959_963_984_540_054 * var_mc.sqrt();
    let residual_se = if lx.len() > 2 {
        let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    Ok(SlopeFit {
        slope,
        intercept,
        ci_low: slope - half,
        ci_high: slope + half,
        residual_se,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitAxis {
    #[default]
    N,
    Epsilon,
}

/// Which error is recorded along each coupled path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// `f^n - f̄`
    Lln,
    /// `(f^n - f̄)/√ε_n - X`
    Clt,
}

#[derive(Debug, Clone)]
pub enum System {
    Transport { f0: SpectralField, drift: DriftSpec },
    Euler { xi0: SpectralField },
}

impl System {
    fn initial(&self) -> &SpectralField {
        match self {
            System::Transport { f0, .. } => f0,
            System::Euler { xi0 } => xi0,
        }
    }

    fn limit(&self, mesh: &TimeMesh) -> Result<LimitPath> {
        match self {
            System::Transport { f0, drift } => LimitPath::transport(f0, drift, mesh),
            System::Euler { xi0 } => LimitPath::euler(xi0, mesh),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RateExperiment {
    pub id: String,
    pub system: System,
    pub error: ErrorKind,
    /// Error measured in `H^{-s}`.
    pub s: f64,
    pub alpha: f64,
    pub window: Window,
    pub n_list: Vec<usize>,
    pub paths: usize,
    pub dt: f64,
    pub t_final: f64,
    pub saves: usize,
    pub seed: u64,
    pub fit_axis: FitAxis,
    pub theory: Option<(ExponentKind, f64)>,
}

impl RateExperiment {
    pub fn grid(&self) -> TorusGrid {
        self.system.initial().grid()
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths < 2 {
            return Err(invalid("paths", format!("must be >= 2, got {}", self.paths)));
        }
        if self.n_list.is_empty() || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("n_list", "must be non-empty and strictly increasing"));
        }
        let k_max = self.grid().k_max();
        for &n in &self.n_list {
            let outer = self.window.outer_radius(n);
            if outer > k_max {
                return Err(invalid(
                    "n_list",
                    format!("n = {n} puts noise modes up to |k| = {outer} beyond the dealias cutoff {k_max}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub n: usize,
    pub epsilon: f64,
    /// Mean over paths of `max_t ‖error‖²`.
    pub mean: f64,
    pub std_error: f64,
    /// Mean over paths of `‖error_T‖²`.
    pub mean_final: f64,
    pub paths: usize,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub n: usize,
    pub path: usize,
    pub seed: u64,
    pub max_sq: f64,
    pub final_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub id: String,
    pub quantity: String,
    pub fit_axis: FitAxis,
    pub points: Vec<RatePoint>,
    pub fit: SlopeFit,
    pub theoretical_exponent: Option<f64>,
    pub formula_id: Option<String>,
    #[serde(skip)]
    pub samples: Vec<PathSample>,
}

impl RateEstimate {
    pub fn strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].mean < w[0].mean)
    }

    /// Coupling bound on `d₂` at `T` per `n`.
    pub fn wasserstein_bounds(&self) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .map(|p| {
                let finals: Vec<f64> = self.samples.iter().filter(|s| s.n == p.n).map(|s| s.final_sq).collect();
                (p.n, wasserstein_coupling_bound(&finals))
            })
            .collect()
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_points_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_samples_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Two-column `n mean` data for gnuplot.
    pub fn write_dat(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "# n mean_sq_error std_error")?;
        for p in &self.points {
            writeln!(f, "{} {:e} {:e}", p.n, p.mean, p.std_error)?;
        }
        Ok(())
    }
}

fn is_abort(e: &Error) -> bool {
    matches!(e, Error::L2Budget { .. } | Error::Instability { .. })
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean, (var / k).sqrt())
}

/// Runs every `(n, path)` pair on coupled drivers and fits the decay of the
/// mean squared error. Seeds follow `master → n → path`.
pub fn run_rate_experiment(exp: &RateExperiment) -> Result<RateEstimate> {
    exp.validate()?;
    let grid = exp.grid();
    let mesh = TimeMesh::new(exp.t_final, exp.dt)?.with_saves(exp.saves);
    let limit = exp.system.limit(&mesh)?;
    let quantity = match exp.error {
        ErrorKind::Lln => Quantity::Lln(exp.s),
        ErrorKind::Clt => Quantity::Clt(exp.s),
    };
    let opts = CouplingOptions::new(vec![quantity]);
    let configs = exp
        .n_list
        .iter()
        .map(|&n| {
            let model = build_noise_model(exp.alpha, n, exp.window)?;
            StochasticRunConfig::new(grid, mesh, model, derive_seed(exp.seed, n as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|i| (0..exp.paths).map(move |p| (i, p)))
        .collect();
    let results: Vec<Option<PathSample>> = jobs
        .par_iter()
        .map(|&(i, p)| {
            let n = exp.n_list[i];
            let seed = derive_seed(derive_seed(exp.seed, n as u64), p as u64);
            let cfg = configs[i].clone().with_seed(seed);
            match run_coupled(&cfg, &limit, exp.system.initial(), &opts, p as u64) {
                Ok(path) => Ok(Some(PathSample {
                    n,
                    path: p,
                    seed,
                    max_sq: path.max_over_time(quantity).powi(2),
                    final_sq: path.final_value(quantity).powi(2),
                })),
                Err(e) if is_abort(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(configs.len());
    for (i, cfg) in configs.iter().enumerate() {
        let n = exp.n_list[i];
        let chunk = &results[i * exp.paths..(i + 1) * exp.paths];
        let ok: Vec<&PathSample> = chunk.iter().flatten().collect();
        let aborted = exp.paths - ok.len();
        if aborted as f64 > MAX_ABORT_FRACTION * exp.paths as f64 {
            return Err(Error::ExperimentFailed(format!(
                "{}: {aborted} of {} paths aborted at n = {n}",
                exp.id, exp.paths
            )));
        }
        let maxes: Vec<f64> = ok.iter().map(|s| s.max_sq).collect();
        let finals: Vec<f64> = ok.iter().map(|s| s.final_sq).collect();
        let (mean, std_error) = mean_and_se(&maxes);
        info!("{} n={n}: mean {mean:.4e} ± {std_error:.2e} ({aborted} aborted)", exp.id);
        points.push(RatePoint {
            n,
            epsilon: cfg.epsilon(),
            mean,
            std_error,
            mean_final: mean_and_se(&finals).0,
            paths: ok.len(),
            aborted,
        });
    }
    let xs: Vec<f64> = points
        .iter()
        .map(|p| match exp.fit_axis {
            FitAxis::N => p.n as f64,
            FitAxis::Epsilon => p.epsilon,
        })
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.mean).collect();
    let ses: Vec<f64> = points.iter().map(|p| p.std_error).collect();
    let fit = if points.len() >= 2 {
        fit_power_law(&xs, &ys, &ses)?
    } else {
        SlopeFit {
            slope: f64::NAN,
            intercept: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            residual_se: f64::NAN,
        }
    };
    Ok(RateEstimate {
        id: exp.id.clone(),
        quantity: quantity.to_string(),
        fit_axis: exp.fit_axis,
        points,
        fit,
        theoretical_exponent: exp.theory.map(|t| t.1),
        formula_id: exp.theory.map(|t| t.0.formula_id().to_string()),
        samples: results.into_iter().flatten().collect(),
    })
}

/// `(E‖Ξ^n_T - Ξ_T‖²)^{1/2}` from coupled squared errors.
pub fn wasserstein_coupling_bound(sq_errors: &[f64]) -> f64 {
    if sq_errors.is_empty() {
        return 0.0;
    }
    (sq_errors.iter().sum::<f64>() / sq_errors.len() as f64).sqrt()
}

/// `Re ⟨L_T, e_k⟩` of the limit fluctuation over independent paths.
pub fn limit_mode_samples(
    system: &System,
    alpha: f64,
    dt: f64,
    t_final: f64,
    k: (i64, i64),
    paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let grid = system.initial().grid();
    let mesh = TimeMesh::new(t_final, dt)?.with_saves(1);
    let limit = system.limit(&mesh)?;
    let base = StochasticRunConfig::new(grid, mesh, crate::noise::NoiseModel::resolvable(alpha, grid)?, seed)?;
    (0..paths)
        .into_par_iter()
        .map(|p| {
            let cfg = base.clone().with_seed(derive_seed(seed, p as u64));
            let traj = match system {
                System::Transport { .. } => run_fluctuation_transport(&cfg, &limit)?,
                System::Euler { .. } => run_fluctuation_euler(&cfg, &limit)?,
            };
            Ok(traj.last().coeff(k.0, k.1).re)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianityThresholds {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub qq: f64,
}

impl Default for GaussianityThresholds {
    fn default() -> Self {
        Self {
            skewness: 0.12,
            excess_kurtosis: 0.15,
            qq: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub samples: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Max `|z_(i) - Φ⁻¹(p_i)|` over plotting positions `p_i ∈ [0.01, 0.99]`.
    pub qq_max_deviation: f64,
    pub degenerate: bool,
    pub passed: bool,
}

/// Moment and quantile diagnostics against the fitted normal.
pub fn gaussianity_report(samples: &[f64], thresholds: GaussianityThresholds) -> Result<GaussianityReport> {
    if samples.len() < 500 {
        return Err(invalid("samples", format!("need at least 500, got {}", samples.len())));
    }
    let k = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / k;
    let m = |p: i32| samples.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / k;
    let (m2, m3, m4) = (m(2), m(3), m(4));
    let std_dev = m2.sqrt();
    if !(std_dev > 1e-12 * mean.abs().max(1e-300)) {
        return Ok(GaussianityReport {
            samples: samples.len(),
            mean,
            std_dev,
            skewness: f64::NAN,
            excess_kurtosis: f64::NAN,
            qq_max_deviation: f64::NAN,
            degenerate: true,
            passed: false,
        });
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / std_dev).collect();
    z.sort_by(|a, b| a.total_cmp(b));
    let qq_max_deviation = z
        .iter()
        .enumerate()
        .filter_map(|(i, zi)| {
            let p = (i as f64 + 0.5) / k;
            (0.01..=0.99).contains(&p).then(|| (zi - normal_quantile(p)).abs())
        })
        .fold(0.0, f64::max);
    let passed = skewness.abs() < thresholds.skewness
        && excess_kurtosis.abs() < thresholds.excess_kurtosis
        && qq_max_deviation < thresholds.qq;
    Ok(GaussianityReport {
        samples: samples.len(),
        mean,
        std_dev,
        skewness,
        excess_kurtosis,
        qq_max_deviation,
        degenerate: false,
        passed,
    })
}

/// Standard normal quantile (Acklam's rational approximation, relative error
/// below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let lo = 0.02425;
    if p < lo {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - lo {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}
