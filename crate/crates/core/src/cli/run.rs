use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::info;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use crate::checks::{
    dual_pair, gradient_probes, ldp_plant_multiplier, noise_suite, CheckResult, DUAL_SPLIT, DUAL_TAU,
};
use crate::cltstats::{run_rate_experiment, theoretical_exponent, ErrorKind, ExponentKind, FitAxis, RateExperiment, System};
use crate::detpde::TimeMesh;
use crate::error::{Error, Result};
use crate::ldp::{
    control_sweep, lower_bound_check, plant_and_recover, tail_probability_mc, OptimizerBudget, RateProblem, TailConfig,
    Target,
};

/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "TNL_SEED";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub force: bool,
    /// Replaces the config's output directory.
    pub out: Option<PathBuf>,
    /// Replaces the config's seed (normally from `TNL_SEED`).
    pub seed: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    /// False when a pass/fail condition of the experiment failed.
    pub passed: bool,
    pub summary: Vec<String>,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tnl_version: &'a str,
    kind: ExperimentKind,
    seed: u64,
    seed_source: &'a str,
    threads: usize,
    started_unix_s: u64,
    wall_seconds: f64,
    aborted_paths: usize,
    passed: bool,
    artifacts: Vec<String>,
}

/// `TNL_SEED`, if set.
pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Error::Config(vec![format!("{SEED_ENV}: expected an unsigned integer, got `{v}`")])),
        Err(_) => Ok(None),
    }
}

/// Creates `dir`, refusing a non-empty one unless `force`.
pub fn prepare_output(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        if !dir.is_dir() {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
        if !force && std::fs::read_dir(dir)?.next().is_some() {
            return Err(Error::OutputExists(dir.to_path_buf()));
        }
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn path(&mut self, name: &str) -> PathBuf {
        self.names.push(name.to_string());
        self.dir.join(name)
    }

    fn json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let p = self.path(name);
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_path(self.path(name))?;
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct KindResult {
    passed: bool,
    aborted: usize,
    summary: Vec<String>,
}

/// Runs one validated experiment and writes its artifact directory:
/// `config.json` (effective config), `metadata.json` and the results.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    let mut cfg = cfg.clone();
    let seed_source = if let Some(seed) = opts.seed {
        cfg.seed = seed;
        "override"
    } else {
        "config"
    };
    if let Some(out) = &opts.out {
        cfg.output = out.clone();
    }
    cfg.validate()?;
    let dir = cfg.resolve(&cfg.output);
    prepare_output(&dir, opts.force)?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let clock = Instant::now();
    let mut art = Artifacts {
        dir: dir.clone(),
        names: Vec::new(),
    };
    art.json("config.json", &cfg)?;
    info!("{:?} -> {}", cfg.kind, dir.display());

    let result = match cfg.kind {
        k if k.is_rate() => run_rate(&cfg, &mut art)?,
        ExperimentKind::LdpMinimize => run_ldp_minimize(&cfg, &mut art)?,
        ExperimentKind::LdpTail => run_ldp_tail(&cfg, &mut art)?,
        ExperimentKind::DualChecks => run_dual(&cfg, &mut art)?,
        ExperimentKind::NoiseChecks => {
            let results = noise_suite(cfg.seed)?;
            checks_result(results, &mut art)?
        }
        _ => unreachable!("rate kinds handled above"),
    };

    let meta = Metadata {
        tnl_version: env!("CARGO_PKG_VERSION"),
        kind: cfg.kind,
        seed: cfg.seed,
        seed_source,
        threads: rayon::current_num_threads(),
        started_unix_s: started,
        wall_seconds: clock.elapsed().as_secs_f64(),
        aborted_paths: result.aborted,
        passed: result.passed,
        artifacts: art.names.clone(),
    };
    std::fs::write(dir.join("metadata.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(RunOutcome {
        dir,
        passed: result.passed,
        summary: result.summary,
    })
}

fn run_rate(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<KindResult> {
    let norms = cfg.resolved_norms();
    let f0 = cfg.initial_field()?;
    let system = if cfg.kind.is_euler() {
        System::Euler { xi0: f0 }
    } else {
        System::Transport {
            f0,
            drift: cfg.drift.clone(),
        }
    };
    let gamma = if cfg.kind.is_euler() { 0.0 } else { cfg.drift.gamma() };
    let theory = match cfg.kind {
        ExperimentKind::LlnTransport => Some((ExponentKind::TransportLln, norms.delta)),
        ExperimentKind::CltTransport => Some((ExponentKind::TransportCltGeneral, norms.delta)),
        ExperimentKind::CltEuler => match norms.beta {
            Some(b) => Some((ExponentKind::EulerClt, Some(b))),
            None => Some((ExponentKind::EulerCltHminus1, None)),
        },
        _ => None,
    }
    .map(|(kind, param)| theoretical_exponent(kind, cfg.alpha, gamma, param).map(|a| (kind, a)))
    .transpose()?;
    let exp = RateExperiment {
        id: format!("{:?}", cfg.kind).to_lowercase(),
        system,
        error: match cfg.kind {
            ExperimentKind::LlnTransport | ExperimentKind::LlnEuler => ErrorKind::Lln,
            _ => ErrorKind::Clt,
        },
        s: norms.s,
        alpha: cfg.alpha,
        window: cfg.window,
        n_list: cfg.n_list.clone(),
        paths: cfg.paths,
        dt: cfg.dt,
        t_final: cfg.t_final,
        saves: cfg.saves,
        seed: cfg.seed,
        fit_axis: FitAxis::N,
        theory,
    };
    let est = run_rate_experiment(&exp)?;
    est.write_json(&art.path("rate.json"))?;
    est.write_points_csv(&art.path("points.csv"))?;
    est.write_samples_csv(&art.path("samples.csv"))?;
    est.write_dat(&art.path("rate.dat"))?;
    let mut summary: Vec<String> = est
        .points
        .iter()
        .map(|p| format!("n = {:>3}: E|err|^2 = {:.4e} +- {:.2e} ({} aborted)", p.n, p.mean, p.std_error, p.aborted))
        .collect();
    summary.push(format!(
        "slope {:.3} [{:.3}, {:.3}]{}; strictly decreasing: {}",
        est.fit.slope,
        est.fit.ci_low,
        est.fit.ci_high,
        est.theoretical_exponent.map_or(String::new(), |a| format!(", theory -{a:.3}")),
        est.strictly_decreasing()
    ));
    Ok(KindResult {
        passed: true,
        aborted: est.points.iter().map(|p| p.aborted).sum(),
        summary,
    })
}

#[derive(Debug, Serialize)]
struct PlantSummary {
    planted_cost: f64,
    upper_bound: f64,
    relative_gap: f64,
    mismatch: f64,
    status: String,
    iterations: usize,
    lambda: f64,
    max_gradient_error: f64,
    objective_nonincreasing: bool,
}

#[derive(Debug, Serialize)]
struct GradientRow {
    slab: usize,
    k1: i64,
    k2: i64,
    adjoint: f64,
    finite_difference: f64,
    relative_error: f64,
}

fn run_ldp_minimize(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<KindResult> {
    let o = cfg.ldp;
    let f0 = cfg.initial_field()?;
    let mesh = TimeMesh::new(cfg.t_final, cfg.dt)?;
    let base = RateProblem::new(f0.clone(), cfg.drift.clone(), Target::Terminal(f0), mesh, cfg.alpha)
        .with_delta(cfg.resolved_norms().delta.unwrap_or(0.0))
        .with_control_radius(o.control_radius)
        .with_budget(OptimizerBudget {
            max_iterations: o.iterations,
            ..Default::default()
        });
    let mu = ldp_plant_multiplier(base.grid(), o.plant_scale)?;
    let plant = plant_and_recover(&base, &mu, o.lambda, 200)?;
    let probes = gradient_probes(&plant, cfg.seed)?;
    let worst = probes.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    let monotone = plant.report.trace.windows(2).all(|w| w[1].objective <= w[0].objective);
    let summary = PlantSummary {
        planted_cost: plant.planted_cost,
        upper_bound: plant.report.upper_bound,
        relative_gap: plant.relative_gap,
        mismatch: plant.report.mismatch,
        status: format!("{:?}", plant.report.status),
        iterations: plant.report.trace.len().saturating_sub(1),
        lambda: o.lambda,
        max_gradient_error: worst,
        objective_nonincreasing: monotone,
    };
    art.json("plant.json", &summary)?;
    plant.report.write_trace_csv(&art.path("trace.csv"))?;
    let rows: Vec<GradientRow> = probes
        .iter()
        .map(|p| GradientRow {
            slab: p.slab,
            k1: p.k[0],
            k2: p.k[1],
            adjoint: p.adjoint,
            finite_difference: p.finite_difference,
            relative_error: p.relative_error,
        })
        .collect();
    art.csv("gradient.csv", &rows)?;
    art.json("control.json", &plant.report.control.checkpoint())?;
    let mut lines = vec![
        format!(
            "planted cost {:.6e}, upper bound {:.6e} ({:+.3}%), status {}",
            summary.planted_cost,
            summary.upper_bound,
            100.0 * summary.relative_gap,
            summary.status
        ),
        format!("max adjoint/central-difference error {worst:.2e}; objective nonincreasing: {monotone}"),
    ];
    if o.sweep > 0 {
        let controls = control_sweep(base.grid(), &mesh, cfg.alpha, o.sweep, 0.5, cfg.seed)?;
        let report = lower_bound_check(&base.f0, &cfg.drift, &mesh, 1.5, &controls)?;
        art.csv("lower_bound.csv", &report.entries)?;
        lines.push(format!(
            "lower-bound sweep: min ratio {} over {} controls ({} excluded)",
            report.min_ratio.map_or("none".to_string(), |r| format!("{r:.4e}")),
            controls.len(),
            report.excluded
        ));
    }
    Ok(KindResult {
        passed: worst < 1e-4 && monotone,
        aborted: 0,
        summary: lines,
    })
}

#[derive(Debug, Serialize)]
struct TailRow {
    n: usize,
    epsilon: f64,
    paths: usize,
    aborted: usize,
    exceedances: usize,
    p_hat: f64,
    ci_low: f64,
    ci_high: f64,
    eps_log_p: Option<f64>,
    degenerate: bool,
}

fn run_ldp_tail(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<KindResult> {
    let f0 = cfg.initial_field()?;
    let tail = TailConfig {
        grid_n: cfg.grid,
        dt: cfg.dt,
        t_final: cfg.t_final,
        saves: cfg.saves,
        alpha: cfg.alpha,
        n_list: cfg.n_list.clone(),
        window: cfg.window,
        radius: cfg.ldp.tail_radius.unwrap_or(f64::NAN),
        delta: cfg.resolved_norms().delta.unwrap_or(f64::NAN),
        paths: cfg.paths,
        seed: cfg.seed,
    };
    let report = tail_probability_mc(&f0, &cfg.drift, &tail)?;
    art.json("tail.json", &report)?;
    let rows: Vec<TailRow> = report
        .entries
        .iter()
        .map(|e| TailRow {
            n: e.n,
            epsilon: e.epsilon,
            paths: e.paths,
            aborted: e.aborted,
            exceedances: e.exceedances,
            p_hat: e.p_hat,
            ci_low: e.ci_low,
            ci_high: e.ci_high,
            eps_log_p: e.eps_log_p,
            degenerate: e.degenerate,
        })
        .collect();
    art.csv("tail.csv", &rows)?;
    let mut summary: Vec<String> = report
        .entries
        .iter()
        .map(|e| {
            format!(
                "n = {:>3}: p = {:.4} [{:.4}, {:.4}] ({} of {}){}",
                e.n,
                e.p_hat,
                e.ci_low,
                e.ci_high,
                e.exceedances,
                e.paths,
                if e.degenerate { " degenerate" } else { "" }
            )
        })
        .collect();
    summary.push(format!(
        "strictly decreasing: {}; eps log p trend: {}",
        report.strictly_decreasing(),
        report.trend_ok()
    ));
    Ok(KindResult {
        passed: true,
        aborted: report.entries.iter().map(|e| e.aborted).sum(),
        summary,
    })
}

fn run_dual(cfg: &ExperimentConfig, art: &mut Artifacts) -> Result<KindResult> {
    let [c, f] = dual_pair(cfg.grid, cfg.dt)?;
    art.csv("dual.csv", &[c, f])?;
    let results = vec![
        CheckResult {
            name: "dual_duality".into(),
            passed: c.duality_error < 1e-5 && f.duality_error <= 0.5 * c.duality_error,
            detail: format!("{:.2e} at dt = {}, {:.2e} at dt = {}", c.duality_error, c.dt, f.duality_error, f.dt),
        },
        CheckResult {
            name: "dual_composition".into(),
            passed: c.composition_error < 1e-5 && f.composition_error <= 0.5 * c.composition_error,
            detail: format!(
                "{:.2e} at dt = {}, {:.2e} at dt = {} (tau = {DUAL_TAU}, split at {DUAL_SPLIT})",
                c.composition_error, c.dt, f.composition_error, f.dt
            ),
        },
    ];
    checks_result(results, art)
}

fn checks_result(results: Vec<CheckResult>, art: &mut Artifacts) -> Result<KindResult> {
    art.csv("checks.csv", &results)?;
    Ok(KindResult {
        passed: results.iter().all(|r| r.passed),
        aborted: 0,
        summary: results.iter().map(ToString::to_string).collect(),
    })
}
