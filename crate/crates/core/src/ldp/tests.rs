use rustfft::num_complex::Complex64;

use super::*;
use crate::detpde::{solve_advection_diffusion, solve_nse_vorticity, DriftSpec, TimeMesh};
use crate::noise::Window;
use crate::spectral::{taylor_green, SpectralField, TorusGrid, VectorField, TWO_PI};

fn grid(n: usize) -> TorusGrid {
    TorusGrid::new(n).unwrap()
}

fn datum(g: TorusGrid) -> SpectralField {
    SpectralField::from_fn(g, |x, y| (TWO_PI * x).cos() + 0.5 * (TWO_PI * (x + 2.0 * y)).sin())
}

fn problem(n: usize, steps: usize) -> RateProblem {
    let g = grid(n);
    let f0 = datum(g);
    let mesh = TimeMesh::from_steps(steps, 2e-3).unwrap();
    RateProblem::new(f0.clone(), DriftSpec::taylor_green(1.0), Target::Terminal(f0), mesh, 0.5)
        .with_delta(0.0)
        .with_control_radius(3.0)
}

fn with_limit_target(p: RateProblem) -> RateProblem {
    let bar = solve_advection_diffusion(&p.f0, &p.drift, &p.mesh).unwrap();
    RateProblem {
        target: Target::Terminal(bar.last().clone()),
        ..p
    }
}

#[test]
fn zero_control_costs_nothing() {
    let g = ControlPath::zeros(grid(8), 10, 0.1, 0.5);
    assert_eq!(rate_cost(&g), 0.0);
}

#[test]
fn unit_single_mode_costs_one_half() {
    // ‖g‖_{L²} = 1 on |k| = 1, α = 0.5, T = 1
    let field = single_mode_field(grid(16), (1, 0), 1.0 / 2f64.sqrt()).unwrap();
    assert!((field.l2_norm() - 1.0).abs() < 1e-15);
    let g = ControlPath::constant(field, 100, 0.01, 0.5).unwrap();
    assert!((rate_cost(&g) - 0.5).abs() < 1e-12);
    assert!((rate_cost(&g.scaled(2.0)) - 4.0 * rate_cost(&g)).abs() < 1e-15);
}

#[test]
fn limit_target_gives_zero_objective() {
    let p = with_limit_target(problem(16, 20));
    let e = evaluate_control(&p, &p.zero_control()).unwrap();
    assert_eq!(e.objective, 0.0);
}

#[test]
fn zero_lambda_objective_is_cost() {
    let p = problem(16, 20).with_lambda(0.0);
    let g = control_sweep(p.grid(), &p.mesh, 0.5, 1, 0.5, 4).unwrap().remove(0);
    let e = evaluate_control(&p, &g).unwrap();
    assert_eq!(e.objective, g.cost());
}

#[test]
fn objective_is_locally_lipschitz() {
    let p = problem(16, 20).with_lambda(10.0);
    let g = control_sweep(p.grid(), &p.mesh, 0.5, 1, 0.5, 4).unwrap().remove(0);
    let j0 = evaluate_control(&p, &g).unwrap().objective;
    let dirs = control_sweep(p.grid(), &p.mesh, 0.5, 20, 1.0, 99).unwrap();
    let consts: Vec<f64> = dirs
        .iter()
        .map(|h| {
            let h = h.scaled(1e-3);
            let mut gh = g.clone();
            for (a, b) in gh.fields_mut().iter_mut().zip(h.fields()) {
                a.axpy(1.0, b);
            }
            let j = evaluate_control(&p, &gh).unwrap().objective;
            (j - j0).abs() / h.l2_distance_sq(&p.zero_control()).sqrt()
        })
        .collect();
    let max = consts.iter().cloned().fold(0.0, f64::max);
    assert!(max.is_finite() && max < 1e3, "{consts:?}");
}

#[test]
fn adjoint_gradient_matches_central_differences() {
    let p = problem(16, 25).with_lambda(50.0).with_delta(0.5);
    let g = control_sweep(p.grid(), &p.mesh, 0.5, 1, 0.5, 8).unwrap().remove(0);
    let p = RateProblem {
        target: Target::Terminal(p.f0.scaled(0.8)),
        ..p
    };
    for probe in finite_difference_check(&p, &g, 10, 1e-5, 1).unwrap() {
        assert!(probe.relative_error <= 1e-4, "{probe:?}");
    }
}

#[test]
fn trajectory_target_gradient_matches_central_differences() {
    let base = problem(16, 15).with_lambda(20.0).with_delta(1.0);
    let bar = solve_advection_diffusion(&base.f0, &DriftSpec::zero(), &base.mesh).unwrap();
    let states = (1..=base.mesh.steps()).map(|m| bar.fields()[m].clone()).collect();
    let p = RateProblem {
        target: Target::Trajectory(states),
        ..base
    };
    let g = control_sweep(p.grid(), &p.mesh, 0.5, 1, 0.5, 2).unwrap().remove(0);
    for probe in finite_difference_check(&p, &g, 10, 1e-5, 5).unwrap() {
        assert!(probe.relative_error <= 1e-4, "{probe:?}");
    }
}

#[test]
fn trajectory_target_length_is_checked() {
    let p = problem(8, 10);
    let p = RateProblem {
        target: Target::Trajectory(vec![p.f0.clone(); 3]),
        ..p
    };
    assert!(evaluate_control(&p, &p.zero_control()).is_err());
}

#[test]
fn limit_target_makes_zero_control_optimal() {
    let p = with_limit_target(problem(16, 20)).with_lambda(100.0);
    let r = minimize_rate(&p).unwrap();
    assert!(r.upper_bound <= 1e-6);
    assert_eq!(r.status, OptimizerStatus::Converged);
}

#[test]
fn objective_never_increases() {
    let p = problem(16, 20).with_lambda(100.0);
    let p = RateProblem {
        target: Target::Terminal(p.f0.scaled(0.9)),
        ..p
    }
    .with_budget(OptimizerBudget {
        max_iterations: 40,
        ..Default::default()
    });
    let r = minimize_rate(&p).unwrap();
    assert!(r.trace.windows(2).all(|w| w[1].objective < w[0].objective));
    assert!(r.trace.len() > 2);
}

#[test]
fn gradient_vanishes_at_stationary_control() {
    let p = problem(16, 20);
    let mu = SpectralField::from_modes(
        p.grid(),
        &[((1, 1), Complex64::new(3.0, 1.0)), ((-1, -1), Complex64::new(3.0, -1.0))],
    )
    .unwrap();
    let (ghat, change) = stationary_control(&p, &mu, 100).unwrap();
    assert!(change < 1e-12);
    // ĝ is stationary for the penalty with f* = f^ĝ_T - μ/λ (δ = 0)
    let fhat = evaluate_control(&p, &ghat).unwrap();
    let lambda = 10.0;
    let target = fhat.states.last().unwrap() - &mu.scaled(1.0 / lambda);
    let q = RateProblem {
        target: Target::Terminal(target),
        lambda,
        ..p
    };
    let e = evaluate_control(&q, &ghat).unwrap();
    let grad = objective_gradient(&q, &ghat, &e).unwrap();
    let gnorm: f64 = grad.iter().map(|x| x.l2_norm().powi(2)).sum::<f64>().sqrt();
    let scale: f64 = ghat.fields().iter().map(|x| x.l2_norm().powi(2)).sum::<f64>().sqrt() * q.mesh.dt();
    assert!(gnorm <= 1e-10 * scale, "{gnorm} vs {scale}");
}

#[test]
fn projection_is_idempotent_and_divergence_free() {
    let g = grid(16);
    let v = VectorField::new(datum(g), datum(g).scaled(-0.3)).unwrap();
    let p = project_control(&v, Some(2.5));
    let pp = project_control(&p, Some(2.5));
    assert!((&p - &pp).l2_norm() < 1e-15);
    assert!(p.divergence_residual() < 1e-12);
    assert_eq!(p.component(0).coeff(0, 0), Complex64::default());
    assert_eq!(p.component(0).coeff(3, 0), Complex64::default());
}

#[test]
fn checkpoint_round_trips() {
    let p = problem(16, 5);
    let g = control_sweep(p.grid(), &p.mesh, 0.5, 1, 0.7, 3).unwrap().remove(0);
    let json = serde_json::to_string(&g.checkpoint()).unwrap();
    let back = ControlPath::from_checkpoint(&serde_json::from_str(&json).unwrap()).unwrap();
    assert!(back.l2_distance_sq(&g) < 1e-28);
    assert_eq!(back.steps(), g.steps());
}

#[test]
fn euler_functional_with_zero_control_and_limit_target() {
    let g = grid(16);
    let xi0 = taylor_green(g);
    let mesh = TimeMesh::from_steps(20, 1e-3).unwrap();
    let bar = solve_nse_vorticity(&xi0, &mesh).unwrap();
    let zero = ControlPath::zeros(g, 20, 1e-3, 0.5);
    let (_, j) = evaluate_euler_control(&xi0, &zero, bar.last(), 10.0, 1.0, &mesh).unwrap();
    assert_eq!(j, 0.0);
    let g1 = ControlPath::constant(single_mode_field(g, (1, 0), 0.5).unwrap(), 20, 1e-3, 0.5).unwrap();
    let (_, j1) = evaluate_euler_control(&xi0, &g1, bar.last(), 0.0, 1.0, &mesh).unwrap();
    assert!((j1 - g1.cost()).abs() < 1e-15);
}

#[test]
fn lower_bound_ratio_is_scale_invariant_at_small_amplitude() {
    let p = problem(16, 25);
    let base = ControlPath::constant(single_mode_field(p.grid(), (1, 1), 0.05).unwrap(), 25, 2e-3, 0.5).unwrap();
    let sweep: Vec<_> = [0.5, 1.0, 2.0].iter().map(|&c| base.scaled(c)).collect();
    let r = lower_bound_check(&p.f0, &p.drift, &p.mesh, 1.5, &sweep).unwrap();
    let ratios: Vec<f64> = r.entries.iter().map(|e| e.ratio.unwrap()).collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(hi / lo - 1.0 <= 0.25, "{ratios:?}");
}

#[test]
fn lower_bound_excludes_zero_control_and_grows_with_delta() {
    let p = problem(16, 25);
    let mut sweep = control_sweep(p.grid(), &p.mesh, 0.5, 5, 0.5, 11).unwrap();
    sweep.push(p.zero_control());
    let a = lower_bound_check(&p.f0, &p.drift, &p.mesh, 1.1, &sweep).unwrap();
    let b = lower_bound_check(&p.f0, &p.drift, &p.mesh, 2.0, &sweep).unwrap();
    assert_eq!(a.excluded, 1);
    assert!(a.entries[5].ratio.is_none());
    assert!(a.min_ratio.unwrap() > 0.0);
    for (x, y) in a.entries.iter().zip(&b.entries).take(5) {
        assert!(x.ratio.unwrap() <= y.ratio.unwrap());
    }
    assert!(lower_bound_check(&p.f0, &p.drift, &p.mesh, 1.0, &sweep).is_err());
}

fn tail_cfg(radius: f64) -> TailConfig {
    TailConfig {
        grid_n: 16,
        dt: 2e-3,
        t_final: 0.02,
        saves: 5,
        alpha: 0.5,
        n_list: vec![2, 4],
        window: Window::LowPass,
        radius,
        delta: 1.5,
        paths: 100,
        seed: 7,
    }
}

#[test]
fn zero_radius_is_always_exceeded() {
    let f0 = datum(grid(16));
    let r = tail_probability_mc(&f0, &DriftSpec::zero(), &tail_cfg(0.0)).unwrap();
    for e in &r.entries {
        assert_eq!(e.p_hat, 1.0);
        assert_eq!(e.eps_log_p, Some(0.0));
        assert!(e.degenerate);
    }
}

#[test]
fn huge_radius_is_flagged() {
    let f0 = datum(grid(16));
    let r = tail_probability_mc(&f0, &DriftSpec::zero(), &tail_cfg(1e6)).unwrap();
    for e in &r.entries {
        assert_eq!(e.exceedances, 0);
        assert!(e.degenerate && e.eps_log_p.is_none());
    }
    assert!(!r.trend_ok());
    let mut few = tail_cfg(1.0);
    few.paths = 99;
    assert!(tail_probability_mc(&f0, &DriftSpec::zero(), &few).is_err());
}

#[test]
fn wilson_interval_brackets_estimate() {
    let (lo, hi) = wilson_interval(30, 100);
    assert!(lo < 0.3 && 0.3 < hi);
    assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
    assert_eq!(wilson_interval(0, 50).0, 0.0);
}

#[test]
fn band_limited_datum_is_unchanged_by_mollification() {
    let p = problem(32, 20);
    let g = control_sweep(p.grid(), &p.mesh, 0.5, 1, 0.5, 1).unwrap().remove(0);
    let r = mollification_stability(&p.f0, &p.drift, &g, &p.mesh, &[0.4, 0.2]).unwrap();
    for e in &r.entries {
        assert!(e.data_distance < 1e-14);
        assert!(e.deviation < 1e-14);
    }
}

#[test]
fn mollification_converges_with_bounded_constant() {
    // |f̂(k)| ~ |k|^{-3}: in H¹
    let gr = grid(64);
    let mut modes = Vec::new();
    for k1 in -21i64..=21 {
        for k2 in -21i64..=21 {
            let r2 = (k1 * k1 + k2 * k2) as f64;
            if r2 > 0.0 {
                modes.push(((k1, k2), Complex64::new(r2.powf(-1.5), 0.0)));
            }
        }
    }
    let f0 = SpectralField::from_modes(gr, &modes).unwrap();
    let mesh = TimeMesh::from_steps(20, 1e-3).unwrap();
    let drift = DriftSpec::taylor_green(1.0);
    let g = control_sweep(gr, &mesh, 0.5, 1, 0.5, 1).unwrap().remove(0);
    let widths = [1.0 / 2.5, 1.0 / 5.0, 1.0 / 10.0, 1.0 / 20.0];
    let r = mollification_stability(&f0, &drift, &g, &mesh, &widths).unwrap();
    assert!(r.deviation_nonincreasing());
    for w in r.entries.windows(2) {
        assert!(w[1].data_distance <= 0.5 * w[0].data_distance, "{:?}", r.entries);
    }
    let ratios: Vec<f64> = r.entries.iter().filter_map(|e| e.ratio()).collect();
    assert!(ratios.iter().all(|&x| x <= 1.0), "{ratios:?}");
}
