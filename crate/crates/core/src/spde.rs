//! Stochastic steppers for the finite-`n` SPDEs, the limit fluctuation
//! equations and the stochastic convolution, coupled through one driver.
//!
//! Every scheme is the exponential Euler–Maruyama step in Itô form: the
//! noise coefficient is evaluated at the left endpoint and the Laplacian is
//! applied exactly through the heat factor.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use crate::detpde::{growth_guard, physical, DriftSpec, Physical2, Stepper, TimeMesh, TrajectorySnapshot};
use crate::error::{invalid, Error, Result};
use crate::noise::{BrownianDriver, NoiseModel, NoiseSampler};
use crate::spectral::{biot_savart, sobolev_norm, Kernel, SpectralField, TorusGrid};

/// Default per-step L² growth allowance, relative to the initial norm.
///
/// The Itô step adds `ε‖ΔW·∇f‖²` before the heat step removes it on average,
/// so single steps can grow the norm by O(ε dt |k|²); at `n = 2` this reaches
/// about 1% per step.
pub const DEFAULT_L2_STEP_TOLERANCE: f64 = 5e-2;

#[derive(Debug, Clone)]
pub struct StochasticRunConfig {
    grid: TorusGrid,
    mesh: TimeMesh,
    noise: NoiseModel,
    limit_noise: NoiseModel,
    seed: u64,
    amplitude: f64,
    l2_step_tolerance: f64,
}

impl StochasticRunConfig {
    /// The limit equations are driven by every mode up to the dealias cutoff.
    pub fn new(grid: TorusGrid, mesh: TimeMesh, noise: NoiseModel, seed: u64) -> Result<Self> {
        let outer = noise.outer_radius();
        if outer > grid.k_max() {
            return Err(invalid(
                "noise",
                format!(
                    "outer radius {outer} exceeds the dealias cutoff {} of an N = {} grid",
                    grid.k_max(),
                    grid.n()
                ),
            ));
        }
        let limit_noise = NoiseModel::resolvable(noise.alpha(), grid)?;
        Ok(Self {
            grid,
            mesh,
            noise,
            limit_noise,
            seed,
            amplitude: 1.0,
            l2_step_tolerance: DEFAULT_L2_STEP_TOLERANCE,
        })
    }

    /// Multiplies every noise increment; `0` switches the noise off.
    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    pub fn with_l2_step_tolerance(mut self, tol: f64) -> Self {
        self.l2_step_tolerance = tol;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn limit_noise(&self) -> &NoiseModel {
        &self.limit_noise
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn epsilon(&self) -> f64 {
        self.noise.epsilon()
    }
}

/// Pointwise `a x + b y` for physical vector fields.
fn combine(a: f64, x: &Physical2, b: f64, y: &Physical2) -> Physical2 {
    let mix = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| a * p + b * q).collect();
    [mix(&x[0], &y[0]), mix(&x[1], &y[1])]
}

fn dot(v: &Physical2, g: &Physical2) -> Vec<f64> {
    let mut out = vec![0.0; v[0].len()];
    Kernel::accumulate_dot(&mut out, 1.0, v, g);
    out
}

fn add_dot(out: &mut [f64], scale: f64, v: &Physical2, g: &Physical2) {
    Kernel::accumulate_dot(out, scale, v, g);
}

struct Budget {
    tol: f64,
    prev: f64,
}

impl Budget {
    fn new(f0: &SpectralField, rel_tol: f64) -> Self {
        let n = f0.l2_norm();
        Self {
            tol: rel_tol * n,
            prev: n,
        }
    }

    fn check(&mut self, f: &SpectralField, step: usize) -> Result<()> {
        let now = f.l2_norm();
        if !(now <= self.prev + self.tol) {
            return Err(Error::L2Budget {
                step,
                before: self.prev,
                after: now,
            });
        }
        self.prev = now;
        Ok(())
    }
}

/// Deterministic limit with the per-step physical data the fluctuation
/// equations need.
#[derive(Debug, Clone)]
pub struct LimitPath {
    kind: LimitKind,
    mesh: TimeMesh,
    trajectory: TrajectorySnapshot,
    drift: Physical2,
    grad: Vec<Physical2>,
    velocity: Vec<Physical2>,
    saved: BTreeMap<usize, SpectralField>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    /// `∂_t f̄ + b·∇f̄ = Δf̄`
    Transport,
    /// `∂_t ξ̄ + (K∗ξ̄)·∇ξ̄ = Δξ̄`
    Euler,
}

impl LimitPath {
    pub fn transport(f0: &SpectralField, b: &DriftSpec, mesh: &TimeMesh) -> Result<Self> {
        let grid = f0.grid();
        let drift = physical(&b.velocity(grid)?);
        let stepper = Stepper::new(grid, mesh.dt());
        stepper.check_cfl(&drift, 0)?;
        Self::build(LimitKind::Transport, f0, mesh, drift, |_, _| Ok(None))
    }

    pub fn euler(xi0: &SpectralField, mesh: &TimeMesh) -> Result<Self> {
        xi0.require_zero_mean(1e-12)?;
        let kernel = Kernel::new(xi0.grid());
        let zero = [vec![0.0; xi0.grid().len()], vec![0.0; xi0.grid().len()]];
        Self::build(LimitKind::Euler, xi0, mesh, zero, |_, xi| {
            Ok(Some(kernel.physical_biot_savart(xi)?))
        })
    }

    /// Rebuilds the per-step data from a trajectory saved at every step.
    pub fn from_trajectory(kind: LimitKind, traj: &TrajectorySnapshot, b: &DriftSpec, mesh: &TimeMesh) -> Result<Self> {
        if traj.len() != mesh.steps() + 1 {
            return Err(Error::MeshMismatch(format!(
                "limit trajectory has {} states, the mesh needs {}",
                traj.len(),
                mesh.steps() + 1
            )));
        }
        for (m, &t) in traj.times().iter().enumerate() {
            if (t - mesh.time(m)).abs() > 1e-9 * mesh.t_final() {
                return Err(Error::MeshMismatch(format!("state {m} at t = {t}, mesh has {}", mesh.time(m))));
            }
        }
        let grid = traj.initial().grid();
        let kernel = Kernel::new(grid);
        let drift = match kind {
            LimitKind::Transport => physical(&b.velocity(grid)?),
            LimitKind::Euler => [vec![0.0; grid.len()], vec![0.0; grid.len()]],
        };
        let mut grad = Vec::with_capacity(mesh.steps());
        let mut velocity = Vec::new();
        let mut saved = BTreeMap::new();
        let mut out = TrajectorySnapshot::new(mesh.stride());
        for (m, f) in traj.fields().iter().enumerate() {
            if m < mesh.steps() {
                grad.push(kernel.physical_grad(f));
                if kind == LimitKind::Euler {
                    velocity.push(kernel.physical_biot_savart(f)?);
                }
            }
            if mesh.is_saved(m) {
                out.push(mesh.time(m), f.clone())?;
                saved.insert(m, f.clone());
            }
        }
        Ok(Self {
            kind,
            mesh: *mesh,
            trajectory: out,
            drift,
            grad,
            velocity,
            saved,
        })
    }

    fn build(
        kind: LimitKind,
        f0: &SpectralField,
        mesh: &TimeMesh,
        drift: Physical2,
        mut own_velocity: impl FnMut(usize, &SpectralField) -> Result<Option<Physical2>>,
    ) -> Result<Self> {
        let grid = f0.grid();
        let stepper = Stepper::new(grid, mesh.dt());
        let norm0 = f0.l2_norm();
        let mut f = f0.clone();
        let mut traj = TrajectorySnapshot::new(mesh.stride());
        let mut saved = BTreeMap::new();
        traj.push(0.0, f.clone())?;
        saved.insert(0, f.clone());
        let mut grad = Vec::with_capacity(mesh.steps());
        let mut velocity = Vec::new();
        for m in 0..mesh.steps() {
            let g = stepper.kernel.physical_grad(&f);
            let v = match own_velocity(m, &f)? {
                Some(u) => {
                    stepper.check_cfl(&u, m)?;
                    velocity.push(u.clone());
                    u
                }
                None => drift.clone(),
            };
            let mut prod = vec![0.0; grid.len()];
            add_dot(&mut prod, mesh.dt(), &v, &g);
            f -= &stepper.kernel.dealiased(&prod);
            stepper.heat.apply(&mut f);
            growth_guard(norm0, &f, m + 1, mesh.dt())?;
            grad.push(g);
            if mesh.is_saved(m + 1) {
                traj.push(mesh.time(m + 1), f.clone())?;
                saved.insert(m + 1, f.clone());
            }
        }
        Ok(Self {
            kind,
            mesh: *mesh,
            trajectory: traj,
            drift,
            grad,
            velocity,
            saved,
        })
    }

    pub fn kind(&self) -> LimitKind {
        self.kind
    }

    pub fn mesh(&self) -> &TimeMesh {
        &self.mesh
    }

    pub fn trajectory(&self) -> &TrajectorySnapshot {
        &self.trajectory
    }

    pub fn grid(&self) -> TorusGrid {
        self.trajectory.initial().grid()
    }

    /// Saved state after `m` steps.
    pub fn state(&self, m: usize) -> Option<&SpectralField> {
        self.saved.get(&m)
    }

    fn check(&self, cfg: &StochasticRunConfig) -> Result<()> {
        if self.grid() != cfg.grid {
            return Err(Error::GridMismatch {
                left: cfg.grid.n(),
                right: self.grid().n(),
            });
        }
        if self.mesh.steps() != cfg.mesh.steps() || (self.mesh.dt() - cfg.mesh.dt()).abs() > 1e-15 {
            return Err(Error::MeshMismatch(format!(
                "limit has {} steps of {:e}, run has {} steps of {:e}",
                self.mesh.steps(),
                self.mesh.dt(),
                cfg.mesh.steps(),
                cfg.mesh.dt()
            )));
        }
        if self.mesh.stride() != cfg.mesh.stride() {
            return Err(Error::MeshMismatch("limit and run save at different strides".into()));
        }
        Ok(())
    }
}

struct Noise {
    driver: BrownianDriver,
    sampler: NoiseSampler,
    scale: f64,
}

impl Noise {
    fn new(cfg: &StochasticRunConfig, model: &NoiseModel, scale: f64) -> Result<Self> {
        Ok(Self {
            driver: BrownianDriver::new(cfg.seed),
            sampler: NoiseSampler::new(model, cfg.grid)?,
            scale,
        })
    }

    /// Physical noise increment (times `scale`) for step `m`.
    fn physical(&self, m: usize, dt: f64) -> Physical2 {
        physical(&self.sampler.field_scaled(&self.driver, m as u64, dt, self.scale))
    }
}

fn generic_sde(
    cfg: &StochasticRunConfig,
    f0: &SpectralField,
    mut velocity: impl FnMut(&SpectralField) -> Result<Physical2>,
) -> Result<TrajectorySnapshot> {
    let mesh = cfg.mesh;
    let stepper = Stepper::new(cfg.grid, mesh.dt());
    let noise = Noise::new(cfg, &cfg.noise, cfg.amplitude * cfg.epsilon().sqrt())?;
    let mut budget = Budget::new(f0, cfg.l2_step_tolerance);
    let mut traj = TrajectorySnapshot::new(mesh.stride());
    let mut f = f0.clone();
    traj.push(0.0, f.clone())?;
    for m in 0..mesh.steps() {
        let u = velocity(&f)?;
        stepper.check_cfl(&u, m)?;
        let v = combine(mesh.dt(), &u, 1.0, &noise.physical(m, mesh.dt()));
        let g = stepper.kernel.physical_grad(&f);
        f -= &stepper.kernel.dealiased(&dot(&v, &g));
        stepper.heat.apply(&mut f);
        budget.check(&f, m + 1)?;
        if mesh.is_saved(m + 1) {
            traj.push(mesh.time(m + 1), f.clone())?;
        }
    }
    Ok(traj)
}

/// `df + b·∇f dt + √ε_n dW^{n,α}·∇f = Δf dt`.
pub fn run_stochastic_transport(
    f0: &SpectralField,
    b: &DriftSpec,
    cfg: &StochasticRunConfig,
) -> Result<TrajectorySnapshot> {
    f0.ensure_same_grid(&SpectralField::zeros(cfg.grid))?;
    let drift = physical(&b.velocity(cfg.grid)?);
    generic_sde(cfg, f0, |_| Ok(drift.clone()))
}

/// `dξ + (K∗ξ)·∇ξ dt + √ε_n dW^{n,α}·∇ξ = Δξ dt`.
pub fn run_stochastic_euler(xi0: &SpectralField, cfg: &StochasticRunConfig) -> Result<TrajectorySnapshot> {
    xi0.require_zero_mean(1e-12)?;
    xi0.ensure_same_grid(&SpectralField::zeros(cfg.grid))?;
    let kernel = Kernel::new(cfg.grid);
    generic_sde(cfg, xi0, |xi| kernel.physical_biot_savart(xi))
}

fn require_kind(limit: &LimitPath, kind: LimitKind) -> Result<()> {
    if limit.kind != kind {
        return Err(invalid("limit", format!("expected a {kind:?} limit, got {:?}", limit.kind)));
    }
    Ok(())
}

/// `dX + b·∇X dt = ΔX dt - dW^α·∇f̄`, `X₀ = 0`.
pub fn run_fluctuation_transport(cfg: &StochasticRunConfig, limit: &LimitPath) -> Result<TrajectorySnapshot> {
    limit.check(cfg)?;
    require_kind(limit, LimitKind::Transport)?;
    let mesh = cfg.mesh;
    let stepper = Stepper::new(cfg.grid, mesh.dt());
    let noise = Noise::new(cfg, &cfg.limit_noise, cfg.amplitude)?;
    let mut x = SpectralField::zeros(cfg.grid);
    let mut traj = TrajectorySnapshot::new(mesh.stride());
    traj.push(0.0, x.clone())?;
    for m in 0..mesh.steps() {
        let w = noise.physical(m, mesh.dt());
        let mut prod = dot(&w, &limit.grad[m]);
        add_dot(&mut prod, mesh.dt(), &limit.drift, &stepper.kernel.physical_grad(&x));
        x -= &stepper.kernel.dealiased(&prod);
        stepper.heat.apply(&mut x);
        if mesh.is_saved(m + 1) {
            traj.push(mesh.time(m + 1), x.clone())?;
        }
    }
    Ok(traj)
}

/// `dΞ = [ΔΞ - (K∗Ξ)·∇ξ̄ - (K∗ξ̄)·∇Ξ] dt - dW^α·∇ξ̄`, `Ξ₀ = 0`.
pub fn run_fluctuation_euler(cfg: &StochasticRunConfig, limit: &LimitPath) -> Result<TrajectorySnapshot> {
    fluctuation_euler_impl(cfg, limit, true)
}

fn fluctuation_euler_impl(cfg: &StochasticRunConfig, limit: &LimitPath, transport: bool) -> Result<TrajectorySnapshot> {
    limit.check(cfg)?;
    require_kind(limit, LimitKind::Euler)?;
    let mesh = cfg.mesh;
    let stepper = Stepper::new(cfg.grid, mesh.dt());
    let noise = Noise::new(cfg, &cfg.limit_noise, cfg.amplitude)?;
    let mut x = SpectralField::zeros(cfg.grid);
    let mut traj = TrajectorySnapshot::new(mesh.stride());
    traj.push(0.0, x.clone())?;
    for m in 0..mesh.steps() {
        let w = noise.physical(m, mesh.dt());
        let mut prod = dot(&w, &limit.grad[m]);
        if transport {
            add_linearized_euler(&stepper, &mut prod, &x, limit, m, mesh.dt())?;
        }
        x -= &stepper.kernel.dealiased(&prod);
        stepper.heat.apply(&mut x);
        if mesh.is_saved(m + 1) {
            traj.push(mesh.time(m + 1), x.clone())?;
        }
    }
    Ok(traj)
}

/// `prod += dt [(K∗Ξ)·∇ξ̄ + (K∗ξ̄)·∇Ξ]`.
fn add_linearized_euler(
    stepper: &Stepper,
    prod: &mut [f64],
    x: &SpectralField,
    limit: &LimitPath,
    m: usize,
    dt: f64,
) -> Result<()> {
    let ux = stepper.kernel.physical_biot_savart(x)?;
    add_dot(prod, dt, &ux, &limit.grad[m]);
    add_dot(prod, dt, &limit.velocity[m], &stepper.kernel.physical_grad(x));
    Ok(())
}

/// `Z_t = ∫₀ᵗ P_{t-s}(dW^α_s·∇ξ̄_s)`, stepped as `Z_{m+1} = P_dt(Z_m + ΔW_m·∇ξ̄_m)`.
///
/// With the transport terms switched off, the fluctuation `Ξ` equals `-Z`.
pub fn stochastic_convolution(cfg: &StochasticRunConfig, limit: &LimitPath) -> Result<TrajectorySnapshot> {
    limit.check(cfg)?;
    let mesh = cfg.mesh;
    let stepper = Stepper::new(cfg.grid, mesh.dt());
    let noise = Noise::new(cfg, &cfg.limit_noise, cfg.amplitude)?;
    let mut z = SpectralField::zeros(cfg.grid);
    let mut traj = TrajectorySnapshot::new(mesh.stride());
    traj.push(0.0, z.clone())?;
    for m in 0..mesh.steps() {
        let w = noise.physical(m, mesh.dt());
        z += &stepper.kernel.dealiased(&dot(&w, &limit.grad[m]));
        stepper.heat.apply(&mut z);
        if mesh.is_saved(m + 1) {
            traj.push(mesh.time(m + 1), z.clone())?;
        }
    }
    Ok(traj)
}

/// `Ξ` with the linearized transport terms dropped (equals `-Z`).
pub fn run_fluctuation_euler_forcing_only(cfg: &StochasticRunConfig, limit: &LimitPath) -> Result<TrajectorySnapshot> {
    fluctuation_euler_impl(cfg, limit, false)
}

/// Recorded error functionals; each carries its Sobolev exponent `s` of `H^{-s}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quantity {
    /// `‖f^n - f̄‖_{H^{-s}}`
    Lln(f64),
    /// `‖(f^n - f̄)/√ε_n - X‖_{H^{-s}}`
    Clt(f64),
    /// `‖(f^n - f̄)/√ε_n‖_{H^{-s}}`
    Fluctuation(f64),
    /// `‖M^n‖_{H^{-s}} / √ε_n`, `M^n` the accumulated noise term
    Martingale(f64),
    /// `‖X‖_{H^{-s}}` (or `‖Ξ‖`)
    Limit(f64),
}

impl fmt::Display for Quantity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (name, s) = match self {
            Quantity::Lln(s) => ("lln", s),
            Quantity::Clt(s) => ("clt", s),
            Quantity::Fluctuation(s) => ("fluct", s),
            Quantity::Martingale(s) => ("mart", s),
            Quantity::Limit(s) => ("limit", s),
        };
        write!(f, "{name}_hm{s}")
    }
}

#[derive(Debug, Clone, Default)]
pub struct CouplingOptions {
    pub quantities: Vec<Quantity>,
    /// Keep the saved states of every co-evolved field.
    pub keep_fields: bool,
}

impl CouplingOptions {
    pub fn new(quantities: Vec<Quantity>) -> Self {
        Self {
            quantities,
            keep_fields: false,
        }
    }

    pub fn keep_fields(mut self) -> Self {
        self.keep_fields = true;
        self
    }

    fn needs_fluctuation(&self) -> bool {
        self.keep_fields || self.quantities.iter().any(|q| matches!(q, Quantity::Clt(_) | Quantity::Limit(_)))
    }

    fn needs_martingale(&self) -> bool {
        self.quantities.iter().any(|q| matches!(q, Quantity::Martingale(_)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub t: f64,
    pub quantity: String,
    pub value: f64,
}

/// One path of `(f^n, f̄, X)` or `(ξ^n, ξ̄, Ξ)` on a shared driver.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    pub path_id: u64,
    pub seed: u64,
    pub records: Vec<PathRecord>,
    /// Saved states keyed by `"state"` (finite `n`) and `"fluctuation"`.
    pub fields: BTreeMap<String, TrajectorySnapshot>,
}

impl CoupledPath {
    pub fn series(&self, q: Quantity) -> Vec<(f64, f64)> {
        let key = q.to_string();
        self.records
            .iter()
            .filter(|r| r.quantity == key)
            .map(|r| (r.t, r.value))
            .collect()
    }

    /// Max over saved times (the `sup_t` proxy).
    pub fn max_over_time(&self, q: Quantity) -> f64 {
        self.series(q).into_iter().map(|(_, v)| v).fold(0.0, f64::max)
    }

    pub fn final_value(&self, q: Quantity) -> f64 {
        self.series(q).last().map_or(f64::NAN, |r| r.1)
    }
}

/// Co-evolves the finite-`n` SPDE and its limit fluctuation on one driver and
/// records the configured quantities at every save time.
pub fn run_coupled(
    cfg: &StochasticRunConfig,
    limit: &LimitPath,
    initial: &SpectralField,
    opts: &CouplingOptions,
    path_id: u64,
) -> Result<CoupledPath> {
    limit.check(cfg)?;
    initial.ensure_same_grid(&SpectralField::zeros(cfg.grid))?;
    if limit.kind == LimitKind::Euler {
        initial.require_zero_mean(1e-12)?;
    }
    let mesh = cfg.mesh;
    let stepper = Stepper::new(cfg.grid, mesh.dt());
    let sqrt_eps = cfg.epsilon().sqrt();
    let fine = Noise::new(cfg, &cfg.noise, cfg.amplitude * sqrt_eps)?;
    let full = Noise::new(cfg, &cfg.limit_noise, cfg.amplitude)?;
    let want_mart = opts.needs_martingale();
    let want_x = opts.needs_fluctuation();

    let mut f = initial.clone();
    let mut x = SpectralField::zeros(cfg.grid);
    let mut mart = SpectralField::zeros(cfg.grid);
    let mut budget = Budget::new(initial, cfg.l2_step_tolerance);
    let mut out = CoupledPath {
        path_id,
        seed: cfg.seed,
        records: Vec::new(),
        fields: BTreeMap::new(),
    };
    let mut keep_f = TrajectorySnapshot::new(mesh.stride());
    let mut keep_x = TrajectorySnapshot::new(mesh.stride());
    let record = |out: &mut CoupledPath, m: usize, f: &SpectralField, x: &SpectralField, mart: &SpectralField| {
        let bar = limit.state(m).expect("limit saved on the run mesh");
        let diff = f - bar;
        for q in &opts.quantities {
            let value = match *q {
                Quantity::Lln(s) => sobolev_norm(&diff, -s),
                Quantity::Clt(s) => {
                    let mut e = diff.scaled(1.0 / sqrt_eps);
                    e -= x;
                    sobolev_norm(&e, -s)
                }
                Quantity::Fluctuation(s) => sobolev_norm(&diff, -s) / sqrt_eps,
                Quantity::Martingale(s) => sobolev_norm(mart, -s) / sqrt_eps,
                Quantity::Limit(s) => sobolev_norm(x, -s),
            };
            out.records.push(PathRecord {
                t: mesh.time(m),
                quantity: q.to_string(),
                value,
            });
        }
    };
    record(&mut out, 0, &f, &x, &mart);
    if opts.keep_fields {
        keep_f.push(0.0, f.clone())?;
        keep_x.push(0.0, x.clone())?;
    }
    for m in 0..mesh.steps() {
        let wn = fine.physical(m, mesh.dt());
        let gf = stepper.kernel.physical_grad(&f);
        let drift_f = match limit.kind {
            LimitKind::Transport => limit.drift.clone(),
            LimitKind::Euler => stepper.kernel.physical_biot_savart(&f)?,
        };
        stepper.check_cfl(&drift_f, m)?;
        let pf = dot(&combine(mesh.dt(), &drift_f, 1.0, &wn), &gf);
        let px = if want_x {
            let wf = full.physical(m, mesh.dt());
            let gx = stepper.kernel.physical_grad(&x);
            let mut px = dot(&wf, &limit.grad[m]);
            match limit.kind {
                LimitKind::Transport => add_dot(&mut px, mesh.dt(), &limit.drift, &gx),
                LimitKind::Euler => {
                    let ux = stepper.kernel.physical_biot_savart(&x)?;
                    add_dot(&mut px, mesh.dt(), &ux, &limit.grad[m]);
                    add_dot(&mut px, mesh.dt(), &limit.velocity[m], &gx);
                }
            }
            px
        } else {
            vec![0.0; pf.len()]
        };
        let (df, dx) = stepper.kernel.dealiased_pair(&pf, &px);
        if want_mart {
            mart += &stepper.kernel.dealiased(&dot(&wn, &gf));
        }
        f -= &df;
        stepper.heat.apply(&mut f);
        x -= &dx;
        stepper.heat.apply(&mut x);
        budget.check(&f, m + 1)?;
        if mesh.is_saved(m + 1) {
            record(&mut out, m + 1, &f, &x, &mart);
            if opts.keep_fields {
                keep_f.push(mesh.time(m + 1), f.clone())?;
                keep_x.push(mesh.time(m + 1), x.clone())?;
            }
        }
    }
    if opts.keep_fields {
        out.fields.insert("state".into(), keep_f);
        out.fields.insert("fluctuation".into(), keep_x);
    }
    Ok(out)
}

/// Streams `path_id,t,quantity,value` rows.
pub fn write_records_csv(path: &Path, paths: &[CoupledPath]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path_id", "t", "quantity", "value"])?;
    for p in paths {
        for r in &p.records {
            w.write_record([p.path_id.to_string(), r.t.to_string(), r.quantity.clone(), r.value.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Velocity of a vorticity field, for callers that assemble their own steps.
pub fn velocity_of(xi: &SpectralField) -> Result<crate::spectral::VectorField> {
    biot_savart(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detpde::{solve_advection_diffusion, solve_nse_vorticity};
    use crate::noise::{build_noise_model, Window};
    use crate::spectral::{taylor_green, TWO_PI};

    fn setup(n: usize, cutoff: usize, steps: usize) -> (TorusGrid, StochasticRunConfig) {
        let grid = TorusGrid::new(n).unwrap();
        let mesh = TimeMesh::from_steps(steps, 1e-3).unwrap().with_saves(5);
        let noise = build_noise_model(0.5, cutoff, Window::LowPass).unwrap();
        (grid, StochasticRunConfig::new(grid, mesh, noise, 17).unwrap())
    }

    fn smooth(grid: TorusGrid) -> SpectralField {
        SpectralField::from_fn(grid, |x, y| (TWO_PI * x).cos() + 0.5 * (TWO_PI * (x + 2.0 * y)).sin())
    }

    #[test]
    fn rejects_unresolvable_noise() {
        let grid = TorusGrid::new(16).unwrap();
        let mesh = TimeMesh::new(0.1, 1e-3).unwrap();
        let noise = build_noise_model(0.5, 6, Window::LowPass).unwrap();
        assert!(StochasticRunConfig::new(grid, mesh, noise, 1).is_err());
    }

    #[test]
    fn noise_off_reproduces_deterministic_solvers() {
        let (grid, cfg) = setup(16, 3, 40);
        let cfg = cfg.with_amplitude(0.0);
        let f0 = smooth(grid);
        let b = DriftSpec::shear(0.7);
        let a = run_stochastic_transport(&f0, &b, &cfg).unwrap();
        let d = solve_advection_diffusion(&f0, &b, cfg.mesh()).unwrap();
        assert_eq!(a, d);
        let xi0 = taylor_green(grid);
        let e = run_stochastic_euler(&xi0, &cfg).unwrap();
        assert_eq!(e, solve_nse_vorticity(&xi0, cfg.mesh()).unwrap());
        let limit = LimitPath::transport(&f0, &b, cfg.mesh()).unwrap();
        assert_eq!(limit.trajectory(), &d);
        let x = run_fluctuation_transport(&cfg, &limit).unwrap();
        assert_eq!(x.last().max_abs_coeff(), 0.0);
    }

    #[test]
    fn mean_is_preserved_and_state_real() {
        let (grid, cfg) = setup(16, 4, 50);
        let f0 = &smooth(grid) + &SpectralField::from_fn(grid, |_, _| 0.3);
        let traj = run_stochastic_transport(&f0, &DriftSpec::taylor_green(0.5), &cfg).unwrap();
        for f in traj.fields() {
            assert!((f.mean() - 0.3).abs() < 1e-14);
            assert!(f.hermitian_defect() < 1e-14);
        }
        let xi = run_stochastic_euler(&taylor_green(grid), &cfg).unwrap();
        for f in xi.fields() {
            assert!(f.mean().abs() < 1e-15);
        }
    }

    #[test]
    fn fluctuation_vanishes_without_forcing() {
        let (grid, cfg) = setup(16, 3, 20);
        let zero = SpectralField::zeros(grid);
        let limit = LimitPath::transport(&zero, &DriftSpec::shear(1.0), cfg.mesh()).unwrap();
        assert_eq!(run_fluctuation_transport(&cfg, &limit).unwrap().last().max_abs_coeff(), 0.0);
        let elimit = LimitPath::euler(&zero, cfg.mesh()).unwrap();
        assert_eq!(run_fluctuation_euler(&cfg, &elimit).unwrap().last().max_abs_coeff(), 0.0);
        assert_eq!(stochastic_convolution(&cfg, &elimit).unwrap().last().max_abs_coeff(), 0.0);
    }

    #[test]
    fn fluctuation_euler_is_linear_in_the_noise() {
        let (grid, cfg) = setup(16, 3, 30);
        let limit = LimitPath::euler(&taylor_green(grid), cfg.mesh()).unwrap();
        let one = run_fluctuation_euler(&cfg, &limit).unwrap();
        let two = run_fluctuation_euler(&cfg.clone().with_amplitude(2.0), &limit).unwrap();
        let diff = two.last() - &one.last().scaled(2.0);
        assert!(diff.max_abs_coeff() <= 1e-13 * one.last().max_abs_coeff());
    }

    #[test]
    fn forcing_only_fluctuation_is_minus_convolution() {
        let (grid, cfg) = setup(16, 3, 30);
        let limit = LimitPath::euler(&taylor_green(grid), cfg.mesh()).unwrap();
        let xi = run_fluctuation_euler_forcing_only(&cfg, &limit).unwrap();
        let z = stochastic_convolution(&cfg, &limit).unwrap();
        assert!((xi.last() + z.last()).max_abs_coeff() < 1e-15);
        assert!(z.last().l2_norm() > 0.0);
    }

    #[test]
    fn coupled_noise_off_records_zero() {
        let (grid, cfg) = setup(16, 3, 20);
        let cfg = cfg.with_amplitude(0.0);
        let f0 = smooth(grid);
        let b = DriftSpec::shear(0.5);
        let limit = LimitPath::transport(&f0, &b, cfg.mesh()).unwrap();
        let opts = CouplingOptions::new(vec![Quantity::Lln(1.0), Quantity::Clt(1.4)]);
        let p = run_coupled(&cfg, &limit, &f0, &opts, 0).unwrap();
        assert!(p.records.iter().all(|r| r.value < 1e-13), "{:?}", p.records);
        let elimit = LimitPath::euler(&taylor_green(grid), cfg.mesh()).unwrap();
        let p = run_coupled(&cfg, &elimit, &taylor_green(grid), &opts, 0).unwrap();
        assert!(p.records.iter().all(|r| r.value < 1e-13));
    }

    #[test]
    fn coupled_fluctuation_matches_standalone() {
        let (grid, cfg) = setup(16, 3, 30);
        let f0 = smooth(grid);
        let b = DriftSpec::shear(0.5);
        let limit = LimitPath::transport(&f0, &b, cfg.mesh()).unwrap();
        let opts = CouplingOptions::new(vec![Quantity::Limit(0.0)]).keep_fields();
        let p = run_coupled(&cfg, &limit, &f0, &opts, 3).unwrap();
        let x = run_fluctuation_transport(&cfg, &limit).unwrap();
        let coupled_x = p.fields["fluctuation"].last();
        assert!((coupled_x - x.last()).max_abs_coeff() < 1e-14);
        assert_eq!(p.series(Quantity::Limit(0.0)).len(), cfg.mesh().saved_steps().len());
    }

    #[test]
    fn mesh_mismatch_is_reported() {
        let (grid, cfg) = setup(16, 3, 20);
        let other = TimeMesh::from_steps(10, 1e-3).unwrap();
        let limit = LimitPath::transport(&smooth(grid), &DriftSpec::zero(), &other).unwrap();
        assert!(matches!(run_fluctuation_transport(&cfg, &limit), Err(Error::MeshMismatch(_))));
        let traj = solve_advection_diffusion(&smooth(grid), &DriftSpec::zero(), &other.with_stride(2)).unwrap();
        assert!(LimitPath::from_trajectory(LimitKind::Transport, &traj, &DriftSpec::zero(), &other).is_err());
        let full = solve_advection_diffusion(&smooth(grid), &DriftSpec::zero(), &other).unwrap();
        let rebuilt = LimitPath::from_trajectory(LimitKind::Transport, &full, &DriftSpec::zero(), &other).unwrap();
        let direct = LimitPath::transport(&smooth(grid), &DriftSpec::zero(), &other).unwrap();
        assert_eq!(rebuilt.trajectory(), direct.trajectory());
    }
}
