use rustfft::num_complex::Complex64;

use super::{pair_from_physical, pair_to_physical, tables, SobolevIndex, SpectralField, TorusGrid, VectorField, TWO_PI};
use crate::error::{invalid, Result};

const MEAN_TOL: f64 = 1e-12;

/// `‖f‖_{H^s} = (Σ_{k≠0} |k|^{2s} |f̂(k)|² + |f̂(0)|²)^{1/2}`.
pub fn sobolev_norm(f: &SpectralField, s: impl Into<SobolevIndex>) -> f64 {
    let s = s.into().0;
    let t = tables(f.grid());
    let mut acc = f.coeffs()[0].norm_sqr();
    for (z, &k2) in f.coeffs().iter().zip(&t.ksq).skip(1) {
        let m = z.norm_sqr();
        if m == 0.0 {
            continue;
        }
        acc += if s == -1.0 { m / k2 } else { k2.powf(s) * m };
    }
    acc.sqrt()
}

/// Componentwise `H^s` norm of a vector field.
pub fn vector_sobolev_norm(v: &VectorField, s: impl Into<SobolevIndex>) -> f64 {
    let s = s.into();
    let a = sobolev_norm(v.component(0), s);
    let b = sobolev_norm(v.component(1), s);
    (a * a + b * b).sqrt()
}

/// Leray–Helmholtz projection: `v̂(k) - k (k·v̂(k)) / |k|²`, mode 0 preserved.
pub fn leray_project(v: &VectorField) -> VectorField {
    let grid = v.grid();
    let mut out = v.clone();
    {
        let [u1, u2] = out.components_mut();
        let (c1, c2) = (u1.coeffs_mut(), u2.coeffs_mut());
        for i in 1..grid.len() {
            let (k1, k2) = grid.mode(i);
            let (k1, k2) = (k1 as f64, k2 as f64);
            let dot = (c1[i] * k1 + c2[i] * k2) / (k1 * k1 + k2 * k2);
            c1[i] -= dot * k1;
            c2[i] -= dot * k2;
        }
    }
    out.with_flag(true)
}

/// Velocity `u = K∗ξ` with `∂₁u₂ - ∂₂u₁ = ξ`, `∇·u = 0`, `û(0) = 0`.
pub fn biot_savart(xi: &SpectralField) -> Result<VectorField> {
    xi.require_zero_mean(MEAN_TOL)?;
    let grid = xi.grid();
    let mut u1 = SpectralField::zeros(grid);
    let mut u2 = SpectralField::zeros(grid);
    {
        let (c1, c2) = (u1.coeffs_mut(), u2.coeffs_mut());
        for (i, z) in xi.coeffs().iter().enumerate().skip(1) {
            let (k1, k2) = grid.mode(i);
            // û = -i k^⊥ ξ̂ / (2π|k|²), k^⊥ = (-k₂, k₁)
            let w = Complex64::new(0.0, -1.0) * z / (TWO_PI * grid.k_squared(i));
            c1[i] = w * (-k2 as f64);
            c2[i] = w * (k1 as f64);
        }
    }
    Ok(VectorField::new(u1, u2)?.with_flag(true))
}

/// `∂₁u₂ - ∂₂u₁`.
pub fn curl(v: &VectorField) -> SpectralField {
    let grid = v.grid();
    let mut out = SpectralField::zeros(grid);
    let (a, b) = (v.component(0).coeffs(), v.component(1).coeffs());
    for (i, o) in out.coeffs_mut().iter_mut().enumerate() {
        let (k1, k2) = grid.mode(i);
        *o = Complex64::new(0.0, TWO_PI) * (k1 as f64 * b[i] - k2 as f64 * a[i]);
    }
    out
}

pub fn divergence(v: &VectorField) -> SpectralField {
    let grid = v.grid();
    let mut out = SpectralField::zeros(grid);
    let (a, b) = (v.component(0).coeffs(), v.component(1).coeffs());
    for (i, o) in out.coeffs_mut().iter_mut().enumerate() {
        let (k1, k2) = grid.mode(i);
        *o = Complex64::new(0.0, TWO_PI) * (k1 as f64 * a[i] + k2 as f64 * b[i]);
    }
    out
}

pub fn gradient(f: &SpectralField) -> VectorField {
    // The Nyquist row/column is differentiated to zero so derivatives of
    // real fields stay real.
    let grid = f.grid();
    let t = tables(grid);
    let c = f.coeffs();
    let d = |k: &[f64]| {
        let coeffs = c
            .iter()
            .zip(k)
            .map(|(z, &k)| Complex64::new(-TWO_PI * k * z.im, TWO_PI * k * z.re))
            .collect();
        SpectralField::from_coeffs(grid, coeffs).expect("same length")
    };
    VectorField::new(d(&t.d1), d(&t.d2)).expect("same grid")
}

/// Heat semigroup `P_t e_k = exp(-4π²|k|² t) e_k`.
pub fn heat_propagate(f: &SpectralField, t: f64) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("heat propagation needs t >= 0, got {t}")));
    }
    let mut out = f.clone();
    HeatMultiplier::new(f.grid(), t).apply(&mut out);
    Ok(out)
}

/// `(-Δ)^{s/2}`: multiplies `f̂(k)` by `|k|^s`; mode 0 kept (zeroed for `s < 0`).
pub fn fractional_laplacian_power(f: &SpectralField, s: f64) -> Result<SpectralField> {
    if s < 0.0 {
        f.require_zero_mean(MEAN_TOL)?;
    }
    let grid = f.grid();
    let mut out = f.clone();
    let c = out.coeffs_mut();
    if s < 0.0 {
        c[0] = Complex64::default();
    }
    if s != 0.0 {
        for (i, z) in c.iter_mut().enumerate().skip(1) {
            *z *= grid.k_squared(i).powf(0.5 * s);
        }
    }
    Ok(out)
}

/// Dealiased spectral representation of `v·∇f`.
pub fn transport_term(v: &VectorField, f: &SpectralField) -> Result<SpectralField> {
    f.ensure_same_grid(v.component(0))?;
    let kernel = Kernel::new(f.grid());
    let vel = kernel.physical_vector(v);
    let grad = kernel.physical_grad(f);
    let mut prod = vec![0.0; f.grid().len()];
    Kernel::accumulate_dot(&mut prod, 1.0, &vel, &grad);
    Ok(kernel.dealiased(&prod))
}

/// Precomputed `exp(-4π²|k|² t)` factors.
#[derive(Debug, Clone)]
pub(crate) struct HeatMultiplier {
    factors: Vec<f64>,
}

impl HeatMultiplier {
    pub(crate) fn new(grid: TorusGrid, t: f64) -> Self {
        let c = -4.0 * std::f64::consts::PI.powi(2) * t;
        Self {
            factors: (0..grid.len()).map(|i| (c * grid.k_squared(i)).exp()).collect(),
        }
    }

    pub(crate) fn apply(&self, f: &mut SpectralField) {
        for (z, m) in f.coeffs_mut().iter_mut().zip(&self.factors) {
            *z *= *m;
        }
    }
}

/// Physical-space helpers shared by every pseudo-spectral stepper.
#[derive(Debug, Clone)]
pub(crate) struct Kernel {
    grid: TorusGrid,
}

pub(crate) type Physical2 = [Vec<f64>; 2];

impl Kernel {
    pub(crate) fn new(grid: TorusGrid) -> Self {
        Self { grid }
    }

    pub(crate) fn physical_grad(&self, f: &SpectralField) -> Physical2 {
        let g = gradient(f);
        let [a, b] = g.into_components();
        let (x, y) = pair_to_physical(&a, &b);
        [x, y]
    }

    pub(crate) fn physical_vector(&self, v: &VectorField) -> Physical2 {
        let (x, y) = pair_to_physical(v.component(0), v.component(1));
        [x, y]
    }

    pub(crate) fn physical_biot_savart(&self, xi: &SpectralField) -> Result<Physical2> {
        Ok(self.physical_vector(&biot_savart(xi)?))
    }

    /// `out += (scale v) · g` pointwise.
    pub(crate) fn accumulate_dot(out: &mut [f64], scale: f64, v: &Physical2, g: &Physical2) {
        for i in 0..out.len() {
            out[i] += (scale * v[0][i]) * g[0][i] + (scale * v[1][i]) * g[1][i];
        }
    }

    pub(crate) fn dealiased(&self, x: &[f64]) -> SpectralField {
        let zero = vec![0.0; x.len()];
        self.dealiased_pair(x, &zero).0
    }

    pub(crate) fn dealiased_pair(&self, x: &[f64], y: &[f64]) -> (SpectralField, SpectralField) {
        let (mut a, mut b) = pair_from_physical(self.grid, x, y);
        a.dealias();
        b.dealias();
        (a, b)
    }

    /// Spectral divergence of the pointwise product `v h`, dealiased.
    pub(crate) fn divergence_of_product(&self, v: &Physical2, h: &[f64]) -> SpectralField {
        let p1: Vec<f64> = v[0].iter().zip(h).map(|(a, b)| a * b).collect();
        let p2: Vec<f64> = v[1].iter().zip(h).map(|(a, b)| a * b).collect();
        let (f1, f2) = self.dealiased_pair(&p1, &p2);
        let field = VectorField::new(f1, f2).expect("same grid");
        divergence(&field)
    }
}
