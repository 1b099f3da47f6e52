//! Self-contained invariant suites behind `tnl checks <suite>` and the
//! `noise_checks` / `dual_checks` experiment kinds.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detpde::{dual_consistency, solve_nse_vorticity, DriftSpec, DualCheck, TimeMesh};
use crate::error::{invalid, Result};
use crate::estimates::{
    heat_defect_bound, heat_defect_ratio, heat_integral_bound, heat_integral_ratio, heat_smoothing_bound,
    heat_smoothing_ratio, lattice_convolution_sup, random_power_field, transport_ratio_suite, TransportBound,
};
use crate::ldp::{
    control_sweep, finite_difference_check, lower_bound_check, plant_and_recover, GradientProbe, OptimizerBudget, PlantReport,
    RateProblem, Target,
};
use crate::noise::{build_noise_model, ito_integral_variance, BrownianDriver, NoiseSampler, Window};
use crate::rng::derive_seed;
use crate::spectral::{
    biot_savart, curl, heat_propagate, leray_project, taylor_green, SpectralField, TorusGrid, VectorField, TWO_PI,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Spectral,
    Noise,
    Dual,
    Estimates,
    Ldp,
    All,
}

impl FromStr for Suite {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "spectral" => Suite::Spectral,
            "noise" => Suite::Noise,
            "dual" => Suite::Dual,
            "estimates" => Suite::Estimates,
            "ldp" => Suite::Ldp,
            "all" => Suite::All,
            other => {
                return Err(invalid(
                    "suite",
                    format!("unknown suite `{other}` (spectral, noise, dual, estimates, ldp, all)"),
                ))
            }
        })
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<CheckResult>> {
    match suite {
        Suite::Spectral => spectral_suite(seed),
        Suite::Noise => noise_suite(seed),
        Suite::Dual => dual_suite(),
        Suite::Estimates => estimates_suite(seed),
        Suite::Ldp => ldp_suite(seed),
        Suite::All => {
            let mut out = spectral_suite(seed)?;
            out.extend(noise_suite(seed)?);
            out.extend(dual_suite()?);
            out.extend(estimates_suite(seed)?);
            out.extend(ldp_suite(seed)?);
            Ok(out)
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    a / b.max(f64::MIN_POSITIVE)
}

/// Operator identities on random fields at `N = 32`.
pub fn spectral_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let grid = TorusGrid::new(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut bs, mut leray, mut semigroup) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let xi = random_power_field(grid, 15, rng.random_range(0.0..2.0), &mut rng);
        let back = curl(&biot_savart(&xi)?);
        bs = bs.max(rel((&back - &xi).l2_norm(), xi.l2_norm()));

        let v = VectorField::new(
            random_power_field(grid, 15, 1.0, &mut rng),
            random_power_field(grid, 15, 1.0, &mut rng),
        )?;
        let p = leray_project(&v);
        let pp = leray_project(&p);
        leray = leray.max(rel((&pp - &p).l2_norm(), p.l2_norm()));

        let (s, t) = (rng.random_range(0.0..0.01), rng.random_range(0.0..0.01));
        let two = heat_propagate(&heat_propagate(&xi, s)?, t)?;
        let one = heat_propagate(&xi, s + t)?;
        semigroup = semigroup.max(rel((&two - &one).l2_norm(), one.l2_norm()));
    }
    let tg = taylor_green_decay(32, 0.1, 1e-4)?;
    Ok(vec![
        CheckResult::new("curl_biot_savart", bs < 1e-10, format!("max relative error {bs:.2e} (< 1e-10)")),
        CheckResult::new("leray_idempotent", leray < 1e-10, format!("max relative error {leray:.2e} (< 1e-10)")),
        CheckResult::new("heat_semigroup", semigroup < 1e-10, format!("max relative error {semigroup:.2e} (< 1e-10)")),
        CheckResult::new("taylor_green_decay", tg < 1e-5, format!("max relative error {tg:.2e} (< 1e-5)")),
    ])
}

/// Max relative error of the vorticity solver against `e^{-8π²t} ξ₀` for the
/// Taylor–Green vortex.
pub fn taylor_green_decay(n: usize, t_final: f64, dt: f64) -> Result<f64> {
    let grid = TorusGrid::new(n)?;
    let xi0 = taylor_green(grid);
    let mesh = TimeMesh::new(t_final, dt)?;
    let traj = solve_nse_vorticity(&xi0, &mesh)?;
    let decay = 2.0 * TWO_PI * TWO_PI;
    Ok(traj
        .times()
        .iter()
        .zip(traj.fields())
        .map(|(&t, f)| {
            let exact = xi0.scaled((-decay * t).exp());
            (f - &exact).l2_norm() / exact.l2_norm()
        })
        .fold(0.0, f64::max))
}

/// `2 / Σ_{0<|k|<=n} |k|^{-2α}` by direct enumeration; valid for any `α`.
pub fn brute_epsilon(alpha: f64, n: usize) -> f64 {
    let n = n as i64;
    let mut s = 0.0;
    for k1 in -n..=n {
        for k2 in -n..=n {
            let r2 = k1 * k1 + k2 * k2;
            if r2 > 0 && r2 <= n * n {
                s += (r2 as f64).powf(-alpha);
            }
        }
    }
    2.0 / s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItoEntry {
    pub field: String,
    pub predicted: f64,
    pub empirical: f64,
    pub relative_error: f64,
}

/// Monte Carlo variance of `Σ_m ⟨f_m, ΔW_m⟩` for three fixed test paths
/// against [`ito_integral_variance`].
pub fn ito_isometry_check(alpha: f64, n: usize, paths: usize, seed: u64) -> Result<Vec<ItoEntry>> {
    if paths < 2 {
        return Err(invalid("paths", "need at least 2"));
    }
    let grid = TorusGrid::new(32)?;
    let model = build_noise_model(alpha, n, Window::LowPass)?;
    let sampler = NoiseSampler::new(&model, grid)?;
    let (steps, dt) = (10usize, 0.01);
    let shear = VectorField::new(SpectralField::from_fn(grid, |_, y| (TWO_PI * y).cos()), SpectralField::zeros(grid))?;
    let vortex = DriftSpec::taylor_green(1.0).velocity(grid)?;
    let tests: Vec<(&str, Vec<VectorField>)> = vec![
        ("shear", vec![shear; steps]),
        ("taylor_green", vec![vortex; steps]),
        (
            "mixed_time_dependent",
            (0..steps)
                .map(|m| {
                    let t = m as f64 * dt;
                    VectorField::new(
                        SpectralField::from_fn(grid, |x, y| (1.0 + 10.0 * t) * (TWO_PI * (x + 2.0 * y)).cos()),
                        SpectralField::from_fn(grid, |x, y| (TWO_PI * x).sin() + 0.5 * (TWO_PI * (x - y)).cos()),
                    )
                })
                .collect::<Result<_>>()?,
        ),
    ];
    let samples: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let driver = BrownianDriver::new(derive_seed(seed, p as u64));
            let mut acc = vec![0.0; tests.len()];
            for m in 0..steps {
                let dw = sampler.field_at(&driver, m as u64, dt);
                for (a, (_, path)) in acc.iter_mut().zip(&tests) {
                    *a += path[m].inner(&dw);
                }
            }
            acc
        })
        .collect();
    Ok(tests
        .iter()
        .enumerate()
        .map(|(i, (name, path))| {
            let xs: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            let predicted = ito_integral_variance(&model, path, dt);
            ItoEntry {
                field: name.to_string(),
                predicted,
                empirical: var,
                relative_error: (var - predicted).abs() / predicted,
            }
        })
        .collect())
}

/// Noise normalization, sampled-field structure and the Itô isometry.
pub fn noise_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let m = build_noise_model(0.5, 1, Window::LowPass)?;
    let e1 = (m.epsilon() - 0.5).abs().max((brute_epsilon(0.5, 1) - 0.5).abs());
    // alpha = 1 lies outside the model's range; the brute sum is checked alone
    let e2 = (brute_epsilon(1.0, 2) - 2.0 / 7.0).abs();
    let mut e3: f64 = 0.0;
    for &(alpha, n) in &[(0.25, 5usize), (0.5, 9), (0.75, 13)] {
        e3 = e3.max((build_noise_model(alpha, n, Window::LowPass)?.epsilon() - brute_epsilon(alpha, n)).abs());
    }
    let eps_err = e1.max(e2).max(e3);
    out.push(CheckResult::new(
        "epsilon_lattice_sums",
        eps_err < 1e-14,
        format!("eps(0.5,1) = 0.5, eps(1,2) = 2/7, max error {eps_err:.1e} (< 1e-14)"),
    ));

    let grid = TorusGrid::new(32)?;
    let (mut div, mut reality, mut herm) = (0.0f64, 0.0f64, 0.0f64);
    for (i, &(alpha, n, window)) in [(0.3, 4usize, Window::LowPass), (0.6, 10, Window::LowPass), (0.5, 5, Window::Band)]
        .iter()
        .enumerate()
    {
        let model = build_noise_model(alpha, n, window)?;
        let sampler = NoiseSampler::new(&model, grid)?;
        let driver = BrownianDriver::new(derive_seed(seed, i as u64));
        for step in 0..20 {
            let w = sampler.field_at(&driver, step, 1e-3);
            let scale = w.coeff_norm().max(f64::MIN_POSITIVE);
            div = div.max(w.divergence_residual() / scale);
            reality = reality.max(w.reality_residue() / scale);
            herm = herm.max(w.hermitian_defect());
        }
    }
    out.push(CheckResult::new(
        "noise_divergence_free",
        div < 1e-14,
        format!("max relative divergence {div:.1e}"),
    ));
    out.push(CheckResult::new(
        "noise_real",
        reality < 1e-10,
        format!("max relative reality residue {reality:.1e} (< 1e-10)"),
    ));
    out.push(CheckResult::new("noise_hermitian", herm == 0.0, format!("max Hermitian defect {herm:.1e}")));

    for e in ito_isometry_check(0.5, 4, 10_000, derive_seed(seed, 99))? {
        out.push(CheckResult::new(
            &format!("ito_isometry_{}", e.field),
            e.relative_error < 0.05,
            format!(
                "MC variance {:.5e} vs predicted {:.5e}, relative error {:.3} (< 0.05)",
                e.empirical, e.predicted, e.relative_error
            ),
        ));
    }
    Ok(out)
}

/// Smooth data for the dual checks at grid size `n`.
pub fn dual_test_data(n: usize) -> Result<(SpectralField, SpectralField, DriftSpec)> {
    let grid = TorusGrid::new(n)?;
    let f0 = SpectralField::from_fn(grid, |x, y| (TWO_PI * x).cos() + 0.3 * (TWO_PI * (2.0 * x - y)).cos());
    let phi = SpectralField::from_fn(grid, |x, y| (TWO_PI * (x + 2.0 * y)).sin() + 0.5 * (TWO_PI * y).cos());
    Ok((f0, phi, DriftSpec::taylor_green(1.0)))
}

/// `τ = 0.1`, split at a time that is not a multiple of either step.
pub const DUAL_TAU: f64 = 0.1;
pub const DUAL_SPLIT: f64 = 0.037_123_4;

pub fn dual_pair(n: usize, dt: f64) -> Result<[DualCheck; 2]> {
    let (f0, phi, b) = dual_test_data(n)?;
    Ok([
        dual_consistency(&f0, &phi, &b, DUAL_TAU, DUAL_SPLIT, dt)?,
        dual_consistency(&f0, &phi, &b, DUAL_TAU, DUAL_SPLIT, dt / 2.0)?,
    ])
}

pub fn dual_suite() -> Result<Vec<CheckResult>> {
    let [c, f] = dual_pair(64, 1e-4)?;
    Ok(vec![
        CheckResult::new(
            "dual_duality",
            c.duality_error < 1e-5 && f.duality_error <= 0.5 * c.duality_error,
            format!("{:.2e} at dt = 1e-4, {:.2e} at dt = 5e-5", c.duality_error, f.duality_error),
        ),
        CheckResult::new(
            "dual_composition",
            c.composition_error < 1e-5 && f.composition_error <= 0.5 * c.composition_error,
            format!("{:.2e} at dt = 1e-4, {:.2e} at dt = 5e-5", c.composition_error, f.composition_error),
        ),
    ])
}

/// Heat-kernel and transport ratio suites, lattice sum stability.
pub fn estimates_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let grid = TorusGrid::new(32)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut integral, mut smoothing, mut defect) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..10 {
        let slabs: Vec<SpectralField> = (0..20)
            .map(|_| random_power_field(grid, 10, rng.random_range(0.0..3.0), &mut rng))
            .collect();
        integral = integral.max(heat_integral_ratio(&slabs, 1e-3, rng.random_range(-2.0..2.0))? / heat_integral_bound());
        let u = &slabs[0];
        let (a, rho) = (rng.random_range(-1.0..1.0), rng.random_range(0.1..2.0));
        for t in [1e-4, 1e-3, 1e-2, 0.1] {
            smoothing = smoothing.max(heat_smoothing_ratio(u, a, rho, t)? / heat_smoothing_bound(rho));
            defect = defect.max(heat_defect_ratio(u, a, rho, t)? / heat_defect_bound(rho));
        }
    }
    let tol = 1.0 + 1e-12;
    let mut out = vec![
        CheckResult::new("heat_integral", integral <= tol, format!("max ratio / bound {integral:.4}")),
        CheckResult::new("heat_smoothing", smoothing <= tol, format!("max ratio / bound {smoothing:.4}")),
        CheckResult::new("heat_defect", defect <= tol, format!("max ratio / bound {defect:.4}")),
    ];
    for (name, bound) in [
        ("transport_smooth", TransportBound::Smooth { a: 0.5, b: 0.25 }),
        ("transport_l2", TransportBound::L2 { b: 0.5 }),
        ("transport_rough", TransportBound::Rough { a: 0.5, b: 0.25, eps: 0.1 }),
    ] {
        let coarse = transport_ratio_suite(bound, 32, 100, seed)?;
        let fine = transport_ratio_suite(bound, 64, 100, seed)?;
        out.push(CheckResult::new(
            name,
            coarse.max_ratio.is_finite() && fine.max_ratio <= 2.0 * coarse.max_ratio,
            format!("max ratio {:.4} at N = 32, {:.4} at N = 64", coarse.max_ratio, fine.max_ratio),
        ));
    }
    let (s1, s2) = lattice_stability(50, 200, 400)?;
    let change = s2 / s1 - 1.0;
    out.push(CheckResult::new(
        "lattice_convolution",
        s1.is_finite() && change.abs() < 0.05,
        format!("sup {s1:.5} at R = 200, {s2:.5} at R = 400, change {:.2}%", 100.0 * change),
    ));
    Ok(out)
}

/// Lattice convolution sup for `(a, b, δ) = (1.5, 1.5, 0.5)` at two radii.
pub fn lattice_stability(j_max: usize, r1: usize, r2: usize) -> Result<(f64, f64)> {
    Ok((
        lattice_convolution_sup(1.5, 1.5, 0.5, j_max, r1)?.sup,
        lattice_convolution_sup(1.5, 1.5, 0.5, j_max, r2)?.sup,
    ))
}

/// Base problem for the optimizer checks: `N = 16`, Taylor–Green drift,
/// `T = 0.1`, controls on `|k| <= 3`, unweighted terminal penalty.
pub fn ldp_base_problem() -> Result<RateProblem> {
    let grid = TorusGrid::new(16)?;
    let f0 = SpectralField::from_fn(grid, |x, y| (TWO_PI * x).cos() + 0.5 * (TWO_PI * (x + 2.0 * y)).sin());
    let mesh = TimeMesh::new(0.1, 2e-3)?;
    Ok(
        RateProblem::new(f0.clone(), DriftSpec::taylor_green(1.0), Target::Terminal(f0), mesh, 0.5)
            .with_delta(0.0)
            .with_control_radius(3.0),
    )
}

/// Terminal multiplier used to plant a control, scaled by `scale`.
pub fn ldp_plant_multiplier(grid: TorusGrid, scale: f64) -> Result<SpectralField> {
    SpectralField::from_modes(
        grid,
        &[
            ((1, 1), Complex64::new(30.0 * scale, 10.0 * scale)),
            ((-1, -1), Complex64::new(30.0 * scale, -10.0 * scale)),
            ((2, 0), Complex64::new(20.0 * scale, 0.0)),
            ((-2, 0), Complex64::new(20.0 * scale, 0.0)),
        ],
    )
}

pub fn ldp_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let base = ldp_base_problem()?;
    let grid = base.grid();
    let mu = ldp_plant_multiplier(grid, 1.0)?;
    let plant = plant_and_recover(
        &base.clone().with_budget(OptimizerBudget {
            max_iterations: 300,
            ..Default::default()
        }),
        &mu,
        1e8,
        200,
    )?;
    let probes = gradient_probes(&plant, seed)?;
    let worst = probes.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    let mut out = vec![CheckResult::new(
        "ldp_gradient",
        worst < 1e-4,
        format!("max relative adjoint/central-difference error {worst:.2e} over {} probes", probes.len()),
    )];
    let monotone = plant.report.trace.windows(2).all(|w| w[1].objective <= w[0].objective);
    out.push(CheckResult::new(
        "ldp_plant_recover",
        plant.relative_gap.abs() < 0.01,
        format!(
            "upper bound {:.6e} vs planted {:.6e} ({:+.3}%), status {:?}",
            plant.report.upper_bound,
            plant.planted_cost,
            100.0 * plant.relative_gap,
            plant.report.status
        ),
    ));
    out.push(CheckResult::new(
        "ldp_objective_monotone",
        monotone,
        format!("{} iterations", plant.report.trace.len()),
    ));

    let (r10, r20) = lower_bound_stability(seed)?;
    out.push(CheckResult::new(
        "ldp_lower_bound",
        r10 > 0.0 && r20 > 0.0 && r10 / r20 < 2.0,
        format!("min ratio {r10:.4e} over 10 controls, {r20:.4e} over 20"),
    ));
    Ok(out)
}

/// Adjoint against central differences on the planted problem at `λ = 10³`,
/// halfway to the planted control.
pub fn gradient_probes(plant: &PlantReport, seed: u64) -> Result<Vec<GradientProbe>> {
    let problem = RateProblem {
        lambda: 1e3,
        ..plant.problem.clone()
    };
    finite_difference_check(&problem, &plant.planted.scaled(0.5), 12, 1e-5, seed)
}

/// Min lower-bound ratio at `δ = 1.5` over 10 and 20 sweep controls.
pub fn lower_bound_stability(seed: u64) -> Result<(f64, f64)> {
    let base = ldp_base_problem()?;
    let grid = base.grid();
    let controls = control_sweep(grid, &base.mesh, base.alpha, 20, 0.5, seed)?;
    let r10 = lower_bound_check(&base.f0, &base.drift, &base.mesh, 1.5, &controls[..10])?;
    let r20 = lower_bound_check(&base.f0, &base.drift, &base.mesh, 1.5, &controls)?;
    Ok((r10.min_ratio.unwrap_or(0.0), r20.min_ratio.unwrap_or(0.0)))
}
