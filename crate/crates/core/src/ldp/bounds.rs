use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ControlPath;
use crate::detpde::{solve_advection_diffusion, solve_skeleton_transport, DriftSpec, TimeMesh};
use crate::error::{invalid, Error, Result};
use crate::noise::{basis_direction, build_noise_model, Window};
use crate::rng::derive_seed;
use crate::spde::{run_coupled, CouplingOptions, LimitPath, Quantity, StochasticRunConfig};
use crate::spectral::{sobolev_norm, SpectralField, TorusGrid, VectorField};

/// Deviations below this are treated as zero (control too weak to measure).
pub const DEVIATION_FLOOR: f64 = 1e-12;

/// Real divergence-free field `c a_k (e_k + e_{-k})` with `a_k = k^⊥/|k|`.
pub fn single_mode_field(grid: TorusGrid, k: (i64, i64), c: f64) -> Result<VectorField> {
    let a = basis_direction(k);
    let modes = |x: f64| [(k, Complex64::new(c * x, 0.0)), ((-k.0, -k.1), Complex64::new(c * x, 0.0))];
    VectorField::new(
        SpectralField::from_modes(grid, &modes(a[0]))?,
        SpectralField::from_modes(grid, &modes(a[1]))?,
    )?
    .into_divergence_free()
}

/// `count` reproducible random controls with independent uniform amplitudes on
/// every mode `1 <= |k| <= 3`. Control `i` depends only on `(seed, i)`, so a
/// larger sweep extends a smaller one.
pub fn control_sweep(grid: TorusGrid, mesh: &TimeMesh, alpha: f64, count: usize, amplitude: f64, seed: u64) -> Result<Vec<ControlPath>> {
    let lattice: Vec<(i64, i64)> = (0..=3)
        .flat_map(|a| (-3..=3).map(move |b| (a, b)))
        .filter(|&(a, b)| (a > 0 || (a == 0 && b > 0)) && a * a + b * b <= 9)
        .collect();
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let mut field = VectorField::zeros(grid);
            for &k in &lattice {
                let c = amplitude * rng.random_range(-1.0..1.0);
                field.axpy(1.0, &single_mode_field(grid, k, c)?);
            }
            // slow modulation in time
            let freq = rng.random_range(0.0..2.0);
            let fields = (0..mesh.steps())
                .map(|m| field.scaled((std::f64::consts::PI * freq * mesh.time(m) / mesh.t_final()).cos()))
                .collect();
            ControlPath::new(mesh.dt(), alpha, fields)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundEntry {
    pub index: usize,
    pub rate_cost: f64,
    /// `‖f^g - f̄‖²_{C⁰H^{-δ}}` over saved times.
    pub deviation_sq: f64,
    /// `rate_cost · ‖f₀‖² / deviation_sq`; `None` when excluded by the floor.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerBoundReport {
    pub delta: f64,
    pub entries: Vec<LowerBoundEntry>,
    pub min_ratio: Option<f64>,
    pub excluded: usize,
}

/// Ratio `I(f^g)‖f₀‖²_{L²} / ‖f^g - f̄‖²_{C⁰H^{-δ}}` over a control sweep;
/// `rate_cost(g)` stands in for the rate of the reached trajectory.
pub fn lower_bound_check(
    f0: &SpectralField,
    drift: &DriftSpec,
    mesh: &TimeMesh,
    delta: f64,
    controls: &[ControlPath],
) -> Result<LowerBoundReport> {
    if !(delta > 1.0) {
        return Err(invalid("delta", format!("must exceed d/2 = 1, got {delta}")));
    }
    let bar = solve_advection_diffusion(f0, drift, mesh)?;
    let f0_sq = f0.l2_norm().powi(2);
    let entries = controls
        .par_iter()
        .enumerate()
        .map(|(index, g)| {
            let traj = solve_skeleton_transport(f0, drift, g, mesh)?;
            let dev = traj.max_distance(&bar, |e| sobolev_norm(e, -delta))?;
            let cost = g.cost();
            Ok(LowerBoundEntry {
                index,
                rate_cost: cost,
                deviation_sq: dev * dev,
                ratio: (dev >= DEVIATION_FLOOR).then(|| cost * f0_sq / (dev * dev)),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let min_ratio = entries.iter().filter_map(|e| e.ratio).reduce(f64::min);
    let excluded = entries.iter().filter(|e| e.ratio.is_none()).count();
    Ok(LowerBoundReport {
        delta,
        entries,
        min_ratio,
        excluded,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailConfig {
    pub grid_n: usize,
    pub dt: f64,
    pub t_final: f64,
    pub saves: usize,
    pub alpha: f64,
    pub n_list: Vec<usize>,
    pub window: Window,
    pub radius: f64,
    pub delta: f64,
    pub paths: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEntry {
    pub n: usize,
    pub epsilon: f64,
    pub paths: usize,
    pub aborted: usize,
    pub exceedances: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `ε_n log p̂`; absent when `p̂ = 0`.
    pub eps_log_p: Option<f64>,
    /// `p̂ ∈ {0, 1}`
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub radius: f64,
    pub delta: f64,
    pub entries: Vec<TailEntry>,
}

impl TailReport {
    pub fn strictly_decreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].p_hat < w[0].p_hat)
    }

    /// Every non-degenerate `ε_n log p̂` is negative and none exceeds ten
    /// times the first in magnitude.
    pub fn trend_ok(&self) -> bool {
        let vals: Vec<f64> = self.entries.iter().filter(|e| !e.degenerate).filter_map(|e| e.eps_log_p).collect();
        let Some(&first) = vals.first() else { return false };
        vals.iter().all(|&v| v < 0.0 && v.abs() <= 10.0 * first.abs())
    }
}

/// Wilson score interval at 95%.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// `P(‖f^n - f̄‖_{C⁰H^{-δ}} >= R)` per `n`. Path `i` uses the same driver seed
/// for every `n`, so the estimates are coupled across the sweep.
pub fn tail_probability_mc(f0: &SpectralField, drift: &DriftSpec, cfg: &TailConfig) -> Result<TailReport> {
    if cfg.paths < 100 {
        return Err(invalid("paths", format!("must be >= 100, got {}", cfg.paths)));
    }
    if !(cfg.radius >= 0.0) {
        return Err(invalid("radius", "must be >= 0"));
    }
    let grid = TorusGrid::new(cfg.grid_n)?;
    let mesh = TimeMesh::new(cfg.t_final, cfg.dt)?.with_saves(cfg.saves);
    let limit = LimitPath::transport(f0, drift, &mesh)?;
    let opts = CouplingOptions::new(vec![Quantity::Lln(cfg.delta)]);
    let mut entries = Vec::with_capacity(cfg.n_list.len());
    for &n in &cfg.n_list {
        let model = build_noise_model(cfg.alpha, n, cfg.window)?;
        let base = StochasticRunConfig::new(grid, mesh, model, cfg.seed)?;
        let outcomes: Vec<Option<bool>> = (0..cfg.paths)
            .into_par_iter()
            .map(|i| {
                let run = base.clone().with_seed(derive_seed(cfg.seed, i as u64));
                match run_coupled(&run, &limit, f0, &opts, i as u64) {
                    Ok(p) => Ok(Some(p.max_over_time(Quantity::Lln(cfg.delta)) >= cfg.radius)),
                    Err(Error::L2Budget { .. }) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_>>()?;
        let aborted = outcomes.iter().filter(|o| o.is_none()).count();
        let used = cfg.paths - aborted;
        let hits = outcomes.iter().filter(|o| **o == Some(true)).count();
        let p_hat = if used == 0 { f64::NAN } else { hits as f64 / used as f64 };
        let (ci_low, ci_high) = wilson_interval(hits, used);
        let eps = base.epsilon();
        entries.push(TailEntry {
            n,
            epsilon: eps,
            paths: used,
            aborted,
            exceedances: hits,
            p_hat,
            ci_low,
            ci_high,
            eps_log_p: (p_hat > 0.0).then(|| eps * p_hat.ln()),
            degenerate: hits == 0 || hits == used,
        });
    }
    Ok(TailReport {
        radius: cfg.radius,
        delta: cfg.delta,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollificationEntry {
    pub width: f64,
    /// Spectral cutoff radius `1/width`.
    pub cutoff: f64,
    /// `‖f₀^w - f₀‖_{L²}`
    pub data_distance: f64,
    /// `‖𝒢(f₀^w, g) - 𝒢(f₀, g)‖_{C⁰H^{-1}}`
    pub deviation: f64,
}

impl MollificationEntry {
    pub fn ratio(&self) -> Option<f64> {
        (self.data_distance > 0.0).then(|| self.deviation / self.data_distance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MollificationReport {
    pub entries: Vec<MollificationEntry>,
}

impl MollificationReport {
    pub fn deviation_nonincreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[1].deviation <= w[0].deviation)
    }

    pub fn max_ratio(&self) -> f64 {
        self.entries.iter().filter_map(|e| e.ratio()).fold(0.0, f64::max)
    }
}

/// Controlled solution with `f₀` replaced by its sharp spectral truncation at
/// radius `1/width`, for decreasing widths.
pub fn mollification_stability(
    f0: &SpectralField,
    drift: &DriftSpec,
    g: &ControlPath,
    mesh: &TimeMesh,
    widths: &[f64],
) -> Result<MollificationReport> {
    if widths.iter().any(|&w| !(w > 0.0)) {
        return Err(invalid("widths", "must be positive"));
    }
    let reference = solve_skeleton_transport(f0, drift, g, mesh)?;
    let entries = widths
        .par_iter()
        .map(|&width| {
            let mollified = f0.low_pass(1.0 / width);
            let traj = solve_skeleton_transport(&mollified, drift, g, mesh)?;
            Ok(MollificationEntry {
                width,
                cutoff: 1.0 / width,
                data_distance: (&mollified - f0).l2_norm(),
                deviation: traj.max_distance(&reference, |e| sobolev_norm(e, -1.0))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MollificationReport { entries })
}
