use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::ControlPath;
use crate::detpde::{physical, solve_skeleton_euler, DriftSpec, Physical2, Stepper, TimeMesh, TrajectorySnapshot};
use crate::error::{invalid, Error, Result};
use crate::spectral::{leray_project, tables, SpectralField, TorusGrid, VectorField};

/// What the controlled trajectory is compared against.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    /// `λ/2 ‖f_T - f*_T‖²_{H^{-δ}}`
    Terminal(SpectralField),
    /// `λ/2 Σ_{m>=1} dt ‖f_m - f*_m‖²_{H^{-δ}}`, one state per mesh step after the first.
    Trajectory(Vec<SpectralField>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerBudget {
    pub max_iterations: usize,
    pub max_backtracks: usize,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    /// Stop once `‖∇J‖_{H^α}` falls below this fraction of its initial value.
    pub gradient_tolerance: f64,
}

impl Default for OptimizerBudget {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            max_backtracks: 40,
            armijo: 1e-4,
            gradient_tolerance: 1e-8,
        }
    }
}

/// Penalized control problem `min_g ½∫‖g‖²_{H^α} + λ/2 · mismatch(f^g, f*)`.
#[derive(Debug, Clone)]
pub struct RateProblem {
    pub f0: SpectralField,
    pub drift: DriftSpec,
    pub target: Target,
    pub lambda: f64,
    pub delta: f64,
    pub alpha: f64,
    pub mesh: TimeMesh,
    /// Controls live on modes with `|k| <= radius` (and inside the dealias square).
    pub control_radius: Option<f64>,
    pub budget: OptimizerBudget,
}

impl RateProblem {
    pub fn new(f0: SpectralField, drift: DriftSpec, target: Target, mesh: TimeMesh, alpha: f64) -> Self {
        Self {
            f0,
            drift,
            target,
            lambda: 1.0,
            delta: 1.0,
            alpha,
            mesh,
            control_radius: None,
            budget: OptimizerBudget::default(),
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_control_radius(mut self, r: f64) -> Self {
        self.control_radius = Some(r);
        self
    }

    pub fn with_budget(mut self, budget: OptimizerBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn grid(&self) -> TorusGrid {
        self.f0.grid()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(invalid("lambda", format!("must be >= 0, got {}", self.lambda)));
        }
        if !(self.delta >= 0.0) {
            return Err(invalid("delta", format!("must be >= 0, got {}", self.delta)));
        }
        if let Target::Trajectory(states) = &self.target {
            if states.len() != self.mesh.steps() {
                return Err(Error::MeshMismatch(format!(
                    "target trajectory has {} states, the mesh has {} steps",
                    states.len(),
                    self.mesh.steps()
                )));
            }
        }
        Ok(())
    }

    pub fn zero_control(&self) -> ControlPath {
        ControlPath::zeros(self.grid(), self.mesh.steps(), self.mesh.dt(), self.alpha)
    }

    fn check_control(&self, g: &ControlPath) -> Result<()> {
        if g.steps() != self.mesh.steps() || (g.dt() - self.mesh.dt()).abs() > 1e-15 || g.grid() != self.grid() {
            return Err(Error::MeshMismatch(format!(
                "control has {} slabs of {:e} on N = {}, problem has {} steps of {:e} on N = {}",
                g.steps(),
                g.dt(),
                g.grid().n(),
                self.mesh.steps(),
                self.mesh.dt(),
                self.grid().n()
            )));
        }
        Ok(())
    }

    /// Orthogonal projection onto the control space.
    pub fn project(&self, v: &VectorField) -> VectorField {
        project_control(v, self.control_radius)
    }
}

/// Leray projection, zero mean, dealias square and optional radius.
pub fn project_control(v: &VectorField, radius: Option<f64>) -> VectorField {
    let mut out = leray_project(v);
    let grid = v.grid();
    let t = tables(grid);
    let r2 = radius.map_or(f64::INFINITY, |r| r * r);
    for comp in out.components_mut().iter_mut() {
        for (i, z) in comp.coeffs_mut().iter_mut().enumerate() {
            if i == 0 || !t.resolved[i] || t.ksq[i] > r2 {
                *z = Complex64::default();
            }
        }
    }
    out
}

/// `½ Σ_m dt ‖g_m‖²_{H^α}`.
pub fn rate_cost(g: &ControlPath) -> f64 {
    g.cost()
}

/// `‖e‖²_{H^{-δ}}` with the unweighted mean.
fn weighted_sq(e: &SpectralField, delta: f64) -> f64 {
    let t = tables(e.grid());
    let mut acc = e.coeffs()[0].norm_sqr();
    for (z, &k2) in e.coeffs().iter().zip(&t.ksq).skip(1) {
        acc += k2.powf(-delta) * z.norm_sqr();
    }
    acc
}

/// `Λ e` with `Λ = (-Δ)^{-δ}` off the mean, identity on it.
fn weighted(e: &SpectralField, delta: f64) -> SpectralField {
    let t = tables(e.grid());
    let mut out = e.clone();
    for (z, &k2) in out.coeffs_mut().iter_mut().zip(&t.ksq).skip(1) {
        *z *= k2.powf(-delta);
    }
    out
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    /// States after `0..=M` steps.
    pub states: Vec<SpectralField>,
    pub objective: f64,
    pub rate_cost: f64,
    /// The `λ/2 · mismatch` part of the objective.
    pub penalty: f64,
    /// Unweighted `‖f_T - f*_T‖_{H^{-δ}}` (terminal) or `(Σ dt ‖·‖²)^{1/2}`.
    pub mismatch: f64,
}

impl Evaluation {
    pub fn trajectory(&self, mesh: &TimeMesh) -> Result<TrajectorySnapshot> {
        let mut t = TrajectorySnapshot::new(mesh.stride());
        for (m, f) in self.states.iter().enumerate() {
            if mesh.is_saved(m) {
                t.push(mesh.time(m), f.clone())?;
            }
        }
        Ok(t)
    }
}

fn velocity(b: &VectorField, g: &VectorField) -> Physical2 {
    physical(&(b + g))
}

fn forward(problem: &RateProblem, g: &ControlPath) -> Result<Vec<SpectralField>> {
    let mesh = &problem.mesh;
    let stepper = Stepper::new(problem.grid(), mesh.dt());
    let b = problem.drift.velocity(problem.grid())?;
    let mut states = Vec::with_capacity(mesh.steps() + 1);
    let mut f = problem.f0.clone();
    states.push(f.clone());
    for (m, gm) in g.fields().iter().enumerate() {
        let v = velocity(&b, gm);
        stepper.check_cfl(&v, m)?;
        f = stepper.transport_step(&f, &v);
        crate::detpde::growth_guard(problem.f0.l2_norm(), &f, m + 1, mesh.dt())?;
        states.push(f.clone());
    }
    Ok(states)
}

fn penalty_of(problem: &RateProblem, states: &[SpectralField]) -> (f64, f64) {
    match &problem.target {
        Target::Terminal(target) => {
            let sq = weighted_sq(&(states.last().unwrap() - target), problem.delta);
            (0.5 * problem.lambda * sq, sq.sqrt())
        }
        Target::Trajectory(targets) => {
            let dt = problem.mesh.dt();
            let sq: f64 = states[1..]
                .iter()
                .zip(targets)
                .map(|(f, t)| dt * weighted_sq(&(f - t), problem.delta))
                .sum();
            (0.5 * problem.lambda * sq, sq.sqrt())
        }
    }
}

/// Forward solve and objective `J(g)`.
pub fn evaluate_control(problem: &RateProblem, g: &ControlPath) -> Result<Evaluation> {
    problem.validate()?;
    problem.check_control(g)?;
    let states = forward(problem, g)?;
    let (penalty, mismatch) = penalty_of(problem, &states);
    let cost = g.cost();
    Ok(Evaluation {
        states,
        objective: cost + penalty,
        rate_cost: cost,
        penalty,
        mismatch,
    })
}

/// `J` for the vorticity skeleton `∂_t ξ + (K∗ξ + g)·∇ξ = Δξ` with a terminal target.
pub fn evaluate_euler_control(
    xi0: &SpectralField,
    g: &ControlPath,
    target: &SpectralField,
    lambda: f64,
    delta: f64,
    mesh: &TimeMesh,
) -> Result<(TrajectorySnapshot, f64)> {
    let traj = solve_skeleton_euler(xi0, g, mesh)?;
    let j = g.cost() + 0.5 * lambda * weighted_sq(&(traj.last() - target), delta);
    Ok((traj, j))
}

/// Backward sweep of the exact discrete adjoint. Returns `Π_V 𝔉(q_m ∇f_m)` per
/// step, where `q_m = D P_dt p_{m+1}` and `p_M = terminal`.
fn adjoint_sweep(
    problem: &RateProblem,
    g: &ControlPath,
    states: &[SpectralField],
    terminal: SpectralField,
) -> Result<Vec<VectorField>> {
    let mesh = &problem.mesh;
    let dt = mesh.dt();
    let grid = problem.grid();
    let stepper = Stepper::new(grid, dt);
    let b = problem.drift.velocity(grid)?;
    let running = |m: usize| -> Option<SpectralField> {
        match &problem.target {
            Target::Trajectory(tg) => {
                Some(weighted(&(&states[m] - &tg[m - 1]), problem.delta).scaled(problem.lambda * dt))
            }
            Target::Terminal(_) => None,
        }
    };
    let m_steps = mesh.steps();
    let mut p = terminal;
    let mut out = vec![VectorField::zeros(grid); m_steps];
    for m in (0..m_steps).rev() {
        let mut pp = p;
        stepper.heat.apply(&mut pp);
        let qp = pp.clone().dealiased().to_physical();
        let grad_f = stepper.kernel.physical_grad(&states[m]);
        let w1: Vec<f64> = qp.iter().zip(&grad_f[0]).map(|(a, b)| a * b).collect();
        let w2: Vec<f64> = qp.iter().zip(&grad_f[1]).map(|(a, b)| a * b).collect();
        let (f1, f2) = stepper.kernel.dealiased_pair(&w1, &w2);
        out[m] = problem.project(&VectorField::new(f1, f2)?);
        if m > 0 {
            let v = velocity(&b, &g.fields()[m]);
            pp.axpy(dt, &stepper.kernel.divergence_of_product(&v, &qp));
            if let Some(r) = running(m) {
                pp += &r;
            }
        }
        p = pp;
    }
    Ok(out)
}

fn terminal_adjoint(problem: &RateProblem, states: &[SpectralField]) -> SpectralField {
    let last = states.last().unwrap();
    match &problem.target {
        Target::Terminal(target) => weighted(&(last - target), problem.delta).scaled(problem.lambda),
        Target::Trajectory(tg) => {
            weighted(&(last - tg.last().unwrap()), problem.delta).scaled(problem.lambda * problem.mesh.dt())
        }
    }
}

fn apply_symbol(v: &VectorField, symbol: impl Fn(f64) -> f64) -> VectorField {
    let t = tables(v.grid());
    let mut out = v.clone();
    for comp in out.components_mut().iter_mut() {
        for (i, z) in comp.coeffs_mut().iter_mut().enumerate() {
            *z = if i == 0 { Complex64::default() } else { *z * symbol(t.ksq[i]) };
        }
    }
    out
}

/// L² gradient `∂J/∂g_m` by the exact discrete adjoint of the forward stepper.
pub fn objective_gradient(problem: &RateProblem, g: &ControlPath, eval: &Evaluation) -> Result<Vec<VectorField>> {
    let dt = problem.mesh.dt();
    let alpha = problem.alpha;
    let w = adjoint_sweep(problem, g, &eval.states, terminal_adjoint(problem, &eval.states))?;
    Ok(w
        .iter()
        .zip(g.fields())
        .map(|(wm, gm)| {
            let mut out = apply_symbol(gm, |k2| dt * k2.powf(alpha));
            out.axpy(-dt, wm);
            out
        })
        .collect())
}

/// Riesz representative of an L² gradient in the `L²_t H^α` metric.
fn riesz(grads: &[VectorField], dt: f64, alpha: f64) -> Vec<VectorField> {
    grads.iter().map(|gr| apply_symbol(gr, |k2| 1.0 / (dt * k2.powf(alpha)))).collect()
}

/// `⟨a, b⟩_{L²_t H^α}`.
fn h_inner(a: &[VectorField], b: &[VectorField], dt: f64, alpha: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let t = tables(x.grid());
            let mut s = 0.0;
            for c in 0..2 {
                for ((p, q), &k2) in x.component(c).coeffs().iter().zip(y.component(c).coeffs()).zip(&t.ksq).skip(1) {
                    s += k2.powf(alpha) * (p.re * q.re + p.im * q.im);
                }
            }
            dt * s
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerStatus {
    Converged,
    MaxIterations,
    /// A full backtracking sweep failed to decrease the objective.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub rate_cost: f64,
    pub mismatch: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub control: ControlPath,
    /// `rate_cost(g*)`, an upper estimate of the penalized rate.
    pub upper_bound: f64,
    pub objective: f64,
    pub mismatch: f64,
    pub status: OptimizerStatus,
    pub trace: Vec<TraceRow>,
}

impl MinimizeReport {
    pub fn write_trace_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for row in &self.trace {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Gradient descent in the `L²_t H^α` geometry with Armijo backtracking.
///
/// Trial steps follow the Barzilai–Borwein rule; every accepted step
/// strictly decreases the objective.
pub fn minimize_rate(problem: &RateProblem) -> Result<MinimizeReport> {
    minimize_from(problem, problem.zero_control())
}

pub fn minimize_from(problem: &RateProblem, start: ControlPath) -> Result<MinimizeReport> {
    problem.validate()?;
    if problem.budget.max_iterations == 0 {
        return Err(invalid("budget", "max_iterations must be > 0"));
    }
    let (dt, alpha) = (problem.mesh.dt(), problem.alpha);
    let mut g = start;
    let mut eval = evaluate_control(problem, &g)?;
    let mut riesz_grad = riesz(&objective_gradient(problem, &g, &eval)?, dt, alpha);
    let norm0 = h_inner(&riesz_grad, &riesz_grad, dt, alpha).sqrt();
    let mut trace = vec![TraceRow {
        iteration: 0,
        objective: eval.objective,
        rate_cost: eval.rate_cost,
        mismatch: eval.mismatch,
        step: 0.0,
    }];
    let mut step = 1.0;
    let mut status = OptimizerStatus::MaxIterations;
    for it in 1..=problem.budget.max_iterations {
        let gnorm2 = h_inner(&riesz_grad, &riesz_grad, dt, alpha);
        if gnorm2.sqrt() <= problem.budget.gradient_tolerance * norm0.max(1e-300) || gnorm2 == 0.0 {
            status = OptimizerStatus::Converged;
            break;
        }
        let mut accepted = None;
        let mut s = step;
        for _ in 0..=problem.budget.max_backtracks {
            let mut trial = g.clone();
            for (tf, r) in trial.fields_mut().iter_mut().zip(&riesz_grad) {
                tf.axpy(-s, r);
            }
            if let Ok(e) = evaluate_control(problem, &trial) {
                if e.objective <= eval.objective - problem.budget.armijo * s * gnorm2 && e.objective < eval.objective {
                    accepted = Some((trial, e));
                    break;
                }
            }
            s *= 0.5;
        }
        let Some((trial, e)) = accepted else {
            status = OptimizerStatus::Stalled;
            break;
        };
        let new_grad = riesz(&objective_gradient(problem, &trial, &e)?, dt, alpha);
        // Barzilai–Borwein trial step for the next iteration.
        let dg: Vec<VectorField> = trial.fields().iter().zip(g.fields()).map(|(a, b)| a - b).collect();
        let dr: Vec<VectorField> = new_grad.iter().zip(&riesz_grad).map(|(a, b)| a - b).collect();
        let num = h_inner(&dg, &dg, dt, alpha);
        let den = h_inner(&dg, &dr, dt, alpha);
        step = if den > 0.0 { (num / den).clamp(1e-10, 1e10) } else { (2.0 * s).min(1e10) };
        g = trial;
        eval = e;
        riesz_grad = new_grad;
        trace.push(TraceRow {
            iteration: it,
            objective: eval.objective,
            rate_cost: eval.rate_cost,
            mismatch: eval.mismatch,
            step: s,
        });
    }
    Ok(MinimizeReport {
        upper_bound: g.cost(),
        objective: eval.objective,
        mismatch: eval.mismatch,
        control: g,
        status,
        trace,
    })
}

/// Control satisfying the first-order conditions of
/// `min ½∫‖g‖²_{H^α}` subject to `f^g_T = y` for some `y`, with terminal
/// adjoint state `mu`: fixed point of `g = (-Δ)^{-α} Π(q ∇f^g)`.
///
/// Returns the iterate and the `L²_t H^α` size of its last update.
pub fn stationary_control(problem: &RateProblem, mu: &SpectralField, iterations: usize) -> Result<(ControlPath, f64)> {
    let (dt, alpha) = (problem.mesh.dt(), problem.alpha);
    let terminal_only = RateProblem {
        target: Target::Terminal(problem.f0.clone()),
        ..problem.clone()
    };
    let mut g = problem.zero_control();
    let mut change = f64::INFINITY;
    for _ in 0..iterations {
        let states = forward(&terminal_only, &g)?;
        let w = adjoint_sweep(&terminal_only, &g, &states, mu.clone())?;
        let next: Vec<VectorField> = w.iter().map(|wm| apply_symbol(wm, |k2| k2.powf(-alpha))).collect();
        let diff: Vec<VectorField> = next.iter().zip(g.fields()).map(|(a, b)| a - b).collect();
        change = h_inner(&diff, &diff, dt, alpha).sqrt();
        g = ControlPath::new(dt, alpha, next)?;
        if change < 1e-14 {
            break;
        }
    }
    Ok((g, change))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientProbe {
    pub slab: usize,
    pub k: [i64; 2],
    pub adjoint: f64,
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Adjoint directional derivatives against central differences along
/// `coordinates` random single-mode directions `a_k(e_k + e_{-k})` in one slab.
pub fn finite_difference_check(
    problem: &RateProblem,
    g: &ControlPath,
    coordinates: usize,
    h: f64,
    seed: u64,
) -> Result<Vec<GradientProbe>> {
    use rand::{Rng, SeedableRng};
    let grid = problem.grid();
    let eval = evaluate_control(problem, g)?;
    let grads = objective_gradient(problem, g, &eval)?;
    let r = problem
        .control_radius
        .unwrap_or(f64::INFINITY)
        .min(grid.k_max() as f64)
        .floor() as i64;
    let modes: Vec<(i64, i64)> = (0..=r)
        .flat_map(|a| (-r..=r).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            (a > 0 || (a == 0 && b > 0)) && ((a * a + b * b) as f64) <= problem.control_radius.map_or(f64::INFINITY, |x| x * x)
        })
        .collect();
    if modes.is_empty() {
        return Err(invalid("control_radius", "admits no control modes"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..coordinates)
        .map(|_| {
            let slab = rng.random_range(0..g.steps());
            let k = modes[rng.random_range(0..modes.len())];
            let d = super::single_mode_field(grid, k, 1.0)?;
            let adjoint = grads[slab].inner(&d);
            let shifted = |s: f64| -> Result<f64> {
                let mut gs = g.clone();
                gs.fields_mut()[slab].axpy(s, &d);
                Ok(evaluate_control(problem, &gs)?.objective)
            };
            let fd = (shifted(h)? - shifted(-h)?) / (2.0 * h);
            let scale = adjoint.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
            Ok(GradientProbe {
                slab,
                k: [k.0, k.1],
                adjoint,
                finite_difference: fd,
                relative_error: (adjoint - fd).abs() / scale,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PlantReport {
    pub planted: ControlPath,
    pub planted_cost: f64,
    /// `upper_bound / planted_cost - 1`
    pub relative_gap: f64,
    /// The recovery problem (planted endpoint as terminal target).
    pub problem: RateProblem,
    pub report: MinimizeReport,
}

/// Plants the stationary control for terminal multiplier `mu`, takes its
/// endpoint as the target and minimizes from zero with penalty `lambda`.
/// For large `lambda` the recovered upper bound approaches the planted cost.
pub fn plant_and_recover(base: &RateProblem, mu: &SpectralField, lambda: f64, fixed_point_iterations: usize) -> Result<PlantReport> {
    let (planted, _) = stationary_control(base, mu, fixed_point_iterations)?;
    let reached = evaluate_control(base, &planted)?;
    let target = reached
        .states
        .last()
        .cloned()
        .ok_or_else(|| invalid("mesh", "needs at least one step"))?;
    let problem = RateProblem {
        target: Target::Terminal(target),
        lambda,
        ..base.clone()
    };
    let report = minimize_rate(&problem)?;
    let planted_cost = planted.cost();
    Ok(PlantReport {
        relative_gap: report.upper_bound / planted_cost - 1.0,
        planted,
        planted_cost,
        problem,
        report,
    })
}
