//! Deterministic solvers: advection–diffusion, 2D Navier–Stokes in vorticity
//! form, the controlled skeleton equations and the backward dual propagator.
//!
//! All of them use the exponential Euler step
//! `f_{m+1} = P_dt (f_m - dt · v_m·∇f_m)`
//! with the heat semigroup applied exactly and the transport term dealiased.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::ldp::ControlPath;
use crate::spectral::{
    biot_savart, pair_to_physical, HeatMultiplier, Kernel, SpectralField, TorusGrid, VectorField,
    TWO_PI,
};

pub(crate) use crate::spectral::Physical2;

/// Runs abort when the L² norm exceeds this multiple of its initial value.
pub const GROWTH_LIMIT: f64 = 10.0;

/// CFL number for the explicit transport term.
pub const CFL: f64 = 0.5;

/// Uniform time mesh `t_m = m dt`, `m = 0..=steps`, with snapshots every `stride` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMesh {
    steps: usize,
    dt: f64,
    stride: usize,
}

impl TimeMesh {
    /// `steps = ceil(T / dt)`; `dt` is shrunk so that the mesh ends exactly at `T`.
    pub fn new(t_final: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(invalid("T", format!("must be positive, got {t_final}")));
        }
        let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
        Ok(Self {
            steps,
            dt: t_final / steps as f64,
            stride: 1,
        })
    }

    pub fn from_steps(steps: usize, dt: f64) -> Result<Self> {
        if steps == 0 {
            return Err(invalid("steps", "must be >= 1"));
        }
        Self::new(steps as f64 * dt, dt).map(|m| Self { steps, dt, ..m })
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    /// Stride giving about `saves` snapshots after the initial one.
    pub fn with_saves(self, saves: usize) -> Self {
        let stride = self.steps.div_ceil(saves.max(1));
        self.with_stride(stride)
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn t_final(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn time(&self, m: usize) -> f64 {
        m as f64 * self.dt
    }

    /// Whether step index `m` (state after `m` steps) is saved.
    pub fn is_saved(&self, m: usize) -> bool {
        m % self.stride == 0 || m == self.steps
    }

    pub fn saved_steps(&self) -> Vec<usize> {
        (0..=self.steps).filter(|&m| self.is_saved(m)).collect()
    }
}

/// Fourier coefficient of a custom drift: `k` and the complex values of both components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftMode {
    pub k: [i64; 2],
    pub u1: [f64; 2],
    pub u2: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum DriftPreset {
    Zero,
    /// Constant velocity.
    Uniform { velocity: [f64; 2] },
    /// `(A sin(2πx₂), 0)`
    Shear { amplitude: f64 },
    /// `A (sin(2πx₁)cos(2πx₂), -cos(2πx₁)sin(2πx₂))`
    TaylorGreen { amplitude: f64 },
    Custom { modes: Vec<DriftMode> },
}

/// Time-independent drift `b` with its integrability exponents.
///
/// `p`, `q` of `b ∈ L^q_t L^p_x`; `None` means `∞`. Only metadata: every
/// preset is smooth, so `γ = 2/q + d/p = 0` unless set otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    #[serde(flatten)]
    pub preset: DriftPreset,
    #[serde(default = "default_true")]
    pub divergence_free: bool,
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub q: Option<f64>,
}

fn default_true() -> bool {
    true
}

impl DriftSpec {
    pub fn new(preset: DriftPreset) -> Self {
        Self {
            preset,
            divergence_free: true,
            p: None,
            q: None,
        }
    }

    pub fn zero() -> Self {
        Self::new(DriftPreset::Zero)
    }

    pub fn uniform(c1: f64, c2: f64) -> Self {
        Self::new(DriftPreset::Uniform { velocity: [c1, c2] })
    }

    pub fn shear(amplitude: f64) -> Self {
        Self::new(DriftPreset::Shear { amplitude })
    }

    pub fn taylor_green(amplitude: f64) -> Self {
        Self::new(DriftPreset::TaylorGreen { amplitude })
    }

    /// `γ = 2/q + d/p` with `d = 2`.
    pub fn gamma(&self) -> f64 {
        let inv = |x: Option<f64>| x.map_or(0.0, |v| 1.0 / v);
        2.0 * inv(self.q) + 2.0 * inv(self.p)
    }

    pub fn velocity(&self, grid: TorusGrid) -> Result<VectorField> {
        let v = match &self.preset {
            DriftPreset::Zero => VectorField::zeros(grid),
            DriftPreset::Uniform { velocity } => VectorField::uniform(grid, velocity[0], velocity[1]),
            DriftPreset::Shear { amplitude } => {
                let a = *amplitude;
                VectorField::new(
                    SpectralField::from_fn(grid, |_, y| a * (TWO_PI * y).sin()),
                    SpectralField::zeros(grid),
                )?
            }
            DriftPreset::TaylorGreen { amplitude } => {
                let a = *amplitude;
                VectorField::new(
                    SpectralField::from_fn(grid, |x, y| a * (TWO_PI * x).sin() * (TWO_PI * y).cos()),
                    SpectralField::from_fn(grid, |x, y| -a * (TWO_PI * x).cos() * (TWO_PI * y).sin()),
                )?
            }
            DriftPreset::Custom { modes } => {
                let m1: Vec<_> = modes
                    .iter()
                    .map(|m| ((m.k[0], m.k[1]), Complex64::new(m.u1[0], m.u1[1])))
                    .collect();
                let m2: Vec<_> = modes
                    .iter()
                    .map(|m| ((m.k[0], m.k[1]), Complex64::new(m.u2[0], m.u2[1])))
                    .collect();
                VectorField::new(
                    SpectralField::from_modes(grid, &m1)?,
                    SpectralField::from_modes(grid, &m2)?,
                )?
            }
        };
        if self.divergence_free {
            v.into_divergence_free()
        } else {
            Ok(v)
        }
    }
}

impl Default for DriftSpec {
    fn default() -> Self {
        Self::zero()
    }
}

/// Saved states of a discrete trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySnapshot {
    stride: usize,
    times: Vec<f64>,
    fields: Vec<SpectralField>,
}

impl TrajectorySnapshot {
    pub fn new(stride: usize) -> Self {
        Self {
            stride: stride.max(1),
            times: Vec::new(),
            fields: Vec::new(),
        }
    }

    /// Appends a state; times must increase and grids must agree.
    pub fn push(&mut self, t: f64, field: SpectralField) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::MeshMismatch(format!("time {t} does not follow {last}")));
            }
            field.ensure_same_grid(&self.fields[0])?;
        }
        self.times.push(t);
        self.fields.push(field);
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fields(&self) -> &[SpectralField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> Option<TorusGrid> {
        self.fields.first().map(|f| f.grid())
    }

    pub fn initial(&self) -> &SpectralField {
        &self.fields[0]
    }

    pub fn last(&self) -> &SpectralField {
        self.fields.last().expect("trajectory is never empty once solved")
    }

    /// `max_m ‖a_m - b_m‖` with `norm` over matching snapshots.
    pub fn max_distance(
        &self,
        other: &TrajectorySnapshot,
        norm: impl Fn(&SpectralField) -> f64,
    ) -> Result<f64> {
        if self.len() != other.len() {
            return Err(Error::MeshMismatch(format!(
                "{} vs {} snapshots",
                self.len(),
                other.len()
            )));
        }
        Ok(self
            .fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| norm(&(a - b)))
            .fold(0.0, f64::max))
    }

    /// CSV rows `t,k1,k2,re,im` for the selected modes.
    pub fn write_modes_csv(&self, path: &Path, modes: &[(i64, i64)]) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "k1", "k2", "re", "im"])?;
        for (t, f) in self.times.iter().zip(&self.fields) {
            for &(k1, k2) in modes {
                let c = f.coeff(k1, k2);
                w.write_record([
                    t.to_string(),
                    k1.to_string(),
                    k2.to_string(),
                    c.re.to_string(),
                    c.im.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Full coefficient dump of the snapshot closest to `t`.
    pub fn write_field_dump(&self, path: &Path, t: f64) -> Result<()> {
        let i = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
            .map(|(i, _)| i)
            .ok_or_else(|| invalid("trajectory", "is empty"))?;
        write_field_csv(path, &self.fields[i])
    }
}

/// CSV rows `k1,k2,re,im` for every stored coefficient.
pub fn write_field_csv(path: &Path, f: &SpectralField) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["k1", "k2", "re", "im"])?;
    let grid = f.grid();
    for (i, c) in f.coeffs().iter().enumerate() {
        let (k1, k2) = grid.mode(i);
        w.write_record([k1.to_string(), k2.to_string(), c.re.to_string(), c.im.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Wiener-algebra bound `Σ_k ⟨2πk⟩^δ |f̂(k)|` on the `C^δ` norm.
pub fn wiener_holder_norm(f: &SpectralField, delta: f64) -> f64 {
    let grid = f.grid();
    f.coeffs()
        .iter()
        .enumerate()
        .map(|(i, z)| (1.0 + TWO_PI * TWO_PI * grid.k_squared(i)).powf(0.5 * delta) * z.norm())
        .sum()
}

/// Explicit-transport exponential Euler engine shared by the solvers.
pub(crate) struct Stepper {
    pub(crate) kernel: Kernel,
    pub(crate) heat: HeatMultiplier,
    pub(crate) dt: f64,
    cfl_speed: f64,
}

impl Stepper {
    pub(crate) fn new(grid: TorusGrid, dt: f64) -> Self {
        Self {
            kernel: Kernel::new(grid),
            heat: HeatMultiplier::new(grid, dt),
            dt,
            cfl_speed: CFL / (TWO_PI * grid.k_max().max(1) as f64 * dt),
        }
    }

    pub(crate) fn check_cfl(&self, v: &Physical2, step: usize) -> Result<()> {
        let speed = max_speed(v);
        if speed > self.cfl_speed {
            return Err(Error::Instability {
                step,
                time: step as f64 * self.dt,
                reason: format!(
                    "CFL violated: |v| = {speed:.3e} exceeds {:.3e} (dt <= 0.5/(2π k_max |v|))",
                    self.cfl_speed
                ),
            });
        }
        Ok(())
    }

    /// `P_dt (f - dt D(v·∇f))` for a physical velocity `v`.
    pub(crate) fn transport_step(&self, f: &SpectralField, v: &Physical2) -> SpectralField {
        let grad = self.kernel.physical_grad(f);
        let mut prod = vec![0.0; f.grid().len()];
        Kernel::accumulate_dot(&mut prod, self.dt, v, &grad);
        let mut out = f.clone();
        out -= &self.kernel.dealiased(&prod);
        self.heat.apply(&mut out);
        out
    }

    /// `P_dt (h + dt D ∇·(v h))`.
    pub(crate) fn fokker_planck_step(&self, h: &SpectralField, v: &Physical2) -> SpectralField {
        let hp = h.to_physical();
        let div = self.kernel.divergence_of_product(v, &hp);
        let mut out = h.clone();
        out.axpy(self.dt, &div);
        self.heat.apply(&mut out);
        out
    }
}

pub(crate) fn max_speed(v: &Physical2) -> f64 {
    v[0].iter()
        .zip(&v[1])
        .map(|(a, b)| (a * a + b * b).sqrt())
        .fold(0.0, f64::max)
}

pub(crate) fn physical(v: &VectorField) -> Physical2 {
    let (a, b) = pair_to_physical(v.component(0), v.component(1));
    [a, b]
}

pub(crate) fn growth_guard(norm0: f64, f: &SpectralField, step: usize, dt: f64) -> Result<()> {
    let n = f.l2_norm();
    if !n.is_finite() || n > GROWTH_LIMIT * norm0.max(1e-300) {
        return Err(Error::Instability {
            step,
            time: step as f64 * dt,
            reason: format!("L2 norm grew from {norm0:.3e} to {n:.3e}"),
        });
    }
    Ok(())
}

/// Generic driver: `velocity(m, f_m)` gives the physical advecting field.
fn integrate<V>(f0: &SpectralField, mesh: &TimeMesh, mut velocity: V) -> Result<TrajectorySnapshot>
where
    V: FnMut(usize, &SpectralField) -> Result<Physical2>,
{
    let stepper = Stepper::new(f0.grid(), mesh.dt());
    let norm0 = f0.l2_norm();
    let mut traj = TrajectorySnapshot::new(mesh.stride());
    let mut f = f0.clone();
    traj.push(0.0, f.clone())?;
    for m in 0..mesh.steps() {
        let v = velocity(m, &f)?;
        stepper.check_cfl(&v, m)?;
        f = stepper.transport_step(&f, &v);
        growth_guard(norm0, &f, m + 1, mesh.dt())?;
        if mesh.is_saved(m + 1) {
            traj.push(mesh.time(m + 1), f.clone())?;
        }
    }
    Ok(traj)
}

/// `∂_t f + b·∇f = Δf`.
pub fn solve_advection_diffusion(
    f0: &SpectralField,
    b: &DriftSpec,
    mesh: &TimeMesh,
) -> Result<TrajectorySnapshot> {
    let v = physical(&b.velocity(f0.grid())?);
    integrate(f0, mesh, |_, _| Ok(v.clone()))
}

/// `∂_t ξ + (K∗ξ)·∇ξ = Δξ`.
pub fn solve_nse_vorticity(xi0: &SpectralField, mesh: &TimeMesh) -> Result<TrajectorySnapshot> {
    xi0.require_zero_mean(1e-12)?;
    let kernel = Kernel::new(xi0.grid());
    integrate(xi0, mesh, |_, xi| kernel.physical_biot_savart(xi))
}

fn check_control(g: &ControlPath, grid: TorusGrid) -> Result<()> {
    if g.grid() != grid {
        return Err(Error::GridMismatch {
            left: grid.n(),
            right: g.grid().n(),
        });
    }
    Ok(())
}

/// `∂_t f + (b + g)·∇f = Δf`, `g` piecewise constant on its own mesh.
pub fn solve_skeleton_transport(
    f0: &SpectralField,
    b: &DriftSpec,
    g: &ControlPath,
    mesh: &TimeMesh,
) -> Result<TrajectorySnapshot> {
    check_control(g, f0.grid())?;
    let bv = b.velocity(f0.grid())?;
    integrate(f0, mesh, |m, _| Ok(physical(&(&bv + g.at(mesh.time(m))))))
}

/// `∂_t ξ + (K∗ξ + g)·∇ξ = Δξ`.
pub fn solve_skeleton_euler(
    xi0: &SpectralField,
    g: &ControlPath,
    mesh: &TimeMesh,
) -> Result<TrajectorySnapshot> {
    xi0.require_zero_mean(1e-12)?;
    check_control(g, xi0.grid())?;
    integrate(xi0, mesh, |m, xi| {
        let u = &biot_savart(xi)? + g.at(mesh.time(m));
        Ok(physical(&u))
    })
}

/// Backward dual `g_t = S_{τ,t} φ` of `∂_t g + ∇·(b g) + Δg = 0`, `g_τ = φ`.
///
/// Solved forward in `s = τ - t` and reversed, so `fields()[m]` is `g` at
/// `times()[m]`, increasing from `0` to `τ`.
pub fn solve_backward_dual(
    phi: &SpectralField,
    b: &DriftSpec,
    tau: f64,
    dt: f64,
) -> Result<TrajectorySnapshot> {
    if !(tau > 0.0) {
        return Err(invalid("tau", format!("must be positive, got {tau}")));
    }
    let mesh = TimeMesh::new(tau, dt)?;
    let grid = phi.grid();
    let v = physical(&b.velocity(grid)?);
    let stepper = Stepper::new(grid, mesh.dt());
    stepper.check_cfl(&v, 0)?;
    let norm0 = phi.l2_norm();
    let mut states = Vec::with_capacity(mesh.steps() + 1);
    let mut h = phi.clone();
    states.push(h.clone());
    for m in 0..mesh.steps() {
        h = stepper.fokker_planck_step(&h, &v);
        growth_guard(norm0, &h, m + 1, mesh.dt())?;
        states.push(h.clone());
    }
    let mut traj = TrajectorySnapshot::new(1);
    for (m, field) in states.into_iter().rev().enumerate() {
        traj.push(mesh.time(m), field)?;
    }
    Ok(traj)
}

/// `S_{τ,0} φ`, the time-zero value of the backward dual.
pub fn dual_at_zero(phi: &SpectralField, b: &DriftSpec, tau: f64, dt: f64) -> Result<SpectralField> {
    Ok(solve_backward_dual(phi, b, tau, dt)?.initial().clone())
}

/// Consistency errors of the discrete dual propagator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualCheck {
    pub dt: f64,
    /// `|⟨f_τ, φ⟩ - ⟨f₀, S_{τ,0}φ⟩| / (‖f₀‖ ‖φ‖)` with `f` the forward solution.
    pub duality_error: f64,
    /// `‖S_{τ,0}φ - S_{s,0} S_{τ,s}φ‖ / ‖φ‖` for the split time `s`.
    pub composition_error: f64,
}

/// Duality with the forward solver and the two-parameter composition law.
/// The drift is time-independent, so `S_{τ,s}` is the dual over `τ - s`.
pub fn dual_consistency(
    f0: &SpectralField,
    phi: &SpectralField,
    b: &DriftSpec,
    tau: f64,
    split: f64,
    dt: f64,
) -> Result<DualCheck> {
    if !(split > 0.0 && split < tau) {
        return Err(invalid("split", format!("must lie in (0, {tau}), got {split}")));
    }
    let forward = solve_advection_diffusion(f0, b, &TimeMesh::new(tau, dt)?)?;
    let whole = dual_at_zero(phi, b, tau, dt)?;
    let scale = f0.l2_norm() * phi.l2_norm();
    let duality_error = (forward.last().inner(phi) - f0.inner(&whole)).abs() / scale;
    let late = dual_at_zero(phi, b, tau - split, dt)?;
    let composed = dual_at_zero(&late, b, split, dt)?;
    Ok(DualCheck {
        dt,
        duality_error,
        composition_error: (&whole - &composed).l2_norm() / phi.l2_norm(),
    })
}

/// Writes a two-column `t value` file.
pub fn write_series_dat(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    for (x, y) in rows {
        writeln!(file, "{x:.12e} {y:.12e}")?;
    }
    Ok(())
}
