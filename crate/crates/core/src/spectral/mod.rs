//! Real scalar and vector fields on the unit 2-torus in Fourier representation.
//!
//! Conventions: `e_k(x) = exp(2πi k·x)` on `[0,1)²`, so `Δ e_k = -4π²|k|² e_k`
//! and every derivative carries a factor `2π`. Sobolev weights use the bare
//! Euclidean `|k|` (no `2π`), i.e. `(-Δ)^{s/2} e_k = |k|^s e_k`.
//!
//! Fields store the full `N × N` coefficient array with Hermitian redundancy.
//! Storage is row-major in `(k₁, k₂)` with the usual FFT wrap-around indexing.

mod fft;
mod ops;

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use ops::{
    biot_savart, curl, divergence, fractional_laplacian_power, gradient, heat_propagate,
    leray_project, sobolev_norm, transport_term, vector_sobolev_norm,
};
pub(crate) use ops::{HeatMultiplier, Kernel};
pub(crate) use ops::Physical2;

pub const TWO_PI: f64 = 2.0 * PI;

/// Square grid of `N × N` points on the unit torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TorusGrid {
    n: usize,
}

impl TorusGrid {
    pub fn new(n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(invalid("N", format!("must be even and >= 8, got {n}")));
        }
        Ok(Self { n })
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Dealiasing cutoff `floor(N/3)` of the 2/3 rule.
    pub fn k_max(&self) -> usize {
        self.n / 3
    }

    /// Wavenumber of an FFT index, in `(-N/2, N/2]`.
    #[inline]
    pub fn wavenumber(&self, i: usize) -> i64 {
        if i <= self.n / 2 {
            i as i64
        } else {
            i as i64 - self.n as i64
        }
    }

    #[inline]
    pub fn mode(&self, idx: usize) -> (i64, i64) {
        (self.wavenumber(idx / self.n), self.wavenumber(idx % self.n))
    }

    /// Storage index of `k`, or `None` when `k` is not representable.
    pub fn index(&self, k1: i64, k2: i64) -> Option<usize> {
        let half = (self.n / 2) as i64;
        let fold = |k: i64| -> Option<usize> {
            if k > -half && k <= half {
                Some(k.rem_euclid(self.n as i64) as usize)
            } else {
                None
            }
        };
        Some(fold(k1)? * self.n + fold(k2)?)
    }

    /// Storage index of `-k` for the mode stored at `idx`.
    #[inline]
    pub fn neg_index(&self, idx: usize) -> usize {
        let (i, j) = (idx / self.n, idx % self.n);
        ((self.n - i) % self.n) * self.n + (self.n - j) % self.n
    }

    #[inline]
    pub fn k_squared(&self, idx: usize) -> f64 {
        let (k1, k2) = self.mode(idx);
        (k1 * k1 + k2 * k2) as f64
    }

    /// Whether the mode survives the 2/3-rule truncation.
    #[inline]
    pub fn is_resolved(&self, idx: usize) -> bool {
        let (k1, k2) = self.mode(idx);
        let km = self.k_max() as i64;
        k1.abs() <= km && k2.abs() <= km
    }

    /// Physical coordinates of grid point `p`.
    pub fn point(&self, p: usize) -> (f64, f64) {
        let h = 1.0 / self.n as f64;
        ((p / self.n) as f64 * h, (p % self.n) as f64 * h)
    }

    fn check(&self, other: &TorusGrid) -> Result<()> {
        if self.n != other.n {
            return Err(Error::GridMismatch {
                left: self.n,
                right: other.n,
            });
        }
        Ok(())
    }
}

/// Per-grid lookup tables for the hot loops.
pub(crate) struct Tables {
    /// Derivative wavenumbers (Nyquist row/column zeroed).
    pub(crate) d1: Vec<f64>,
    pub(crate) d2: Vec<f64>,
    pub(crate) ksq: Vec<f64>,
    pub(crate) resolved: Vec<bool>,
    pub(crate) neg: Vec<usize>,
}

impl Tables {
    fn new(grid: TorusGrid) -> Self {
        let half = (grid.n / 2) as i64;
        let nyq = |k: i64| if k == half { 0.0 } else { k as f64 };
        let modes: Vec<(i64, i64)> = (0..grid.len()).map(|i| grid.mode(i)).collect();
        Self {
            d1: modes.iter().map(|m| nyq(m.0)).collect(),
            d2: modes.iter().map(|m| nyq(m.1)).collect(),
            ksq: (0..grid.len()).map(|i| grid.k_squared(i)).collect(),
            resolved: (0..grid.len()).map(|i| grid.is_resolved(i)).collect(),
            neg: (0..grid.len()).map(|i| grid.neg_index(i)).collect(),
        }
    }
}

thread_local! {
    static TABLES: RefCell<HashMap<usize, Rc<Tables>>> = RefCell::new(HashMap::new());
}

pub(crate) fn tables(grid: TorusGrid) -> Rc<Tables> {
    TABLES.with(|t| {
        t.borrow_mut()
            .entry(grid.n)
            .or_insert_with(|| Rc::new(Tables::new(grid)))
            .clone()
    })
}

/// Real exponent of a fractional Sobolev space `H^s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevIndex(pub f64);

impl From<f64> for SobolevIndex {
    fn from(s: f64) -> Self {
        SobolevIndex(s)
    }
}

/// Fourier coefficients of a real scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: TorusGrid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::default(); grid.len()],
        }
    }

    pub fn from_coeffs(grid: TorusGrid, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(invalid(
                "coeffs",
                format!("expected {} coefficients, got {}", grid.len(), coeffs.len()),
            ));
        }
        Ok(Self { grid, coeffs })
    }

    /// Builds a real field from `(k, f̂(k))` pairs; `f̂(-k)` is set to the conjugate.
    pub fn from_modes(grid: TorusGrid, modes: &[((i64, i64), Complex64)]) -> Result<Self> {
        let mut f = Self::zeros(grid);
        for &((k1, k2), c) in modes {
            f.set_mode(k1, k2, c)?;
        }
        Ok(f)
    }

    /// Samples a real function on the grid and transforms it.
    pub fn from_fn(grid: TorusGrid, func: impl Fn(f64, f64) -> f64) -> Self {
        let values: Vec<f64> = (0..grid.len())
            .map(|p| {
                let (x, y) = grid.point(p);
                func(x, y)
            })
            .collect();
        Self::from_physical(grid, &values)
    }

    pub fn from_physical(grid: TorusGrid, values: &[f64]) -> Self {
        assert_eq!(values.len(), grid.len(), "physical array has wrong size");
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft::plan(grid.n()).forward(&mut data);
        let mut out = Self { grid, coeffs: data };
        out.symmetrize();
        out
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at `k` (zero when not representable).
    pub fn coeff(&self, k1: i64, k2: i64) -> Complex64 {
        self.grid
            .index(k1, k2)
            .map(|i| self.coeffs[i])
            .unwrap_or_default()
    }

    /// Sets `f̂(k) = c` and `f̂(-k) = conj(c)`.
    pub fn set_mode(&mut self, k1: i64, k2: i64, c: Complex64) -> Result<()> {
        let i = self
            .grid
            .index(k1, k2)
            .ok_or_else(|| invalid("mode", format!("({k1},{k2}) not representable")))?;
        let j = self.grid.neg_index(i);
        if i == j {
            self.coeffs[i] = Complex64::new(c.re, 0.0);
        } else {
            self.coeffs[i] = c;
            self.coeffs[j] = c.conj();
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// Physical values (real part of the synthesis).
    pub fn to_physical(&self) -> Vec<f64> {
        let mut data = self.coeffs.clone();
        fft::plan(self.grid.n()).inverse(&mut data);
        data.into_iter().map(|z| z.re).collect()
    }

    /// Largest imaginary part of the synthesized field relative to its sup norm.
    pub fn reality_residue(&self) -> f64 {
        let mut data = self.coeffs.clone();
        fft::plan(self.grid.n()).inverse(&mut data);
        let re = data.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
        let im = data.iter().fold(0.0f64, |m, z| m.max(z.im.abs()));
        if re == 0.0 {
            im
        } else {
            im / re
        }
    }

    /// `max_k |f̂(k) - conj(f̂(-k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let t = tables(self.grid);
        (0..self.coeffs.len())
            .map(|i| (self.coeffs[i] - self.coeffs[t.neg[i]].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Replaces `f̂(k)` by `(f̂(k) + conj f̂(-k)) / 2`.
    pub fn symmetrize(&mut self) {
        let t = tables(self.grid);
        for i in 0..self.coeffs.len() {
            let j = t.neg[i];
            if j < i {
                continue;
            }
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
    }

    /// Zeroes every mode outside the 2/3-rule square.
    pub fn dealias(&mut self) {
        let t = tables(self.grid);
        for (z, &keep) in self.coeffs.iter_mut().zip(&t.resolved) {
            if !keep {
                *z = Complex64::default();
            }
        }
    }

    pub fn dealiased(mut self) -> Self {
        self.dealias();
        self
    }

    /// Real L² inner product `∫ f g dx`.
    pub fn inner(&self, other: &SpectralField) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        debug_assert_eq!(self.grid, other.grid);
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|z| *z *= a);
        out
    }

    pub fn ensure_same_grid(&self, other: &SpectralField) -> Result<()> {
        self.grid.check(&other.grid)
    }

    pub fn require_zero_mean(&self, tol: f64) -> Result<()> {
        let mean = self.mean();
        let scale = self.max_abs_coeff().max(1.0);
        if mean.abs() > tol * scale || self.coeffs[0].im.abs() > tol * scale {
            return Err(Error::NonZeroMean { mean });
        }
        Ok(())
    }

    /// Keeps only modes with Euclidean `|k| <= radius`.
    pub fn low_pass(&self, radius: f64) -> Self {
        let mut out = self.clone();
        let r2 = radius * radius;
        for (i, z) in out.coeffs.iter_mut().enumerate() {
            if self.grid.k_squared(i) > r2 {
                *z = Complex64::default();
            }
        }
        out
    }

    /// Re-samples on another grid (truncating or zero-padding modes).
    pub fn resample(&self, grid: TorusGrid) -> Self {
        let mut out = Self::zeros(grid);
        for (i, z) in self.coeffs.iter().enumerate() {
            if z.norm() == 0.0 {
                continue;
            }
            let (k1, k2) = self.grid.mode(i);
            if let Some(j) = grid.index(k1, k2) {
                out.coeffs[j] = *z;
            }
        }
        out.symmetrize();
        out
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl AddAssign<&SpectralField> for SpectralField {
    fn add_assign(&mut self, rhs: &SpectralField) {
        self.axpy(1.0, rhs);
    }
}

impl SubAssign<&SpectralField> for SpectralField {
    fn sub_assign(&mut self, rhs: &SpectralField) {
        self.axpy(-1.0, rhs);
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, a: f64) -> SpectralField {
        self.scaled(a)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scaled(-1.0)
    }
}

/// Real vector field with two spectral components.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    components: [SpectralField; 2],
    divergence_free: bool,
}

impl VectorField {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            components: [SpectralField::zeros(grid), SpectralField::zeros(grid)],
            divergence_free: true,
        }
    }

    pub fn new(u1: SpectralField, u2: SpectralField) -> Result<Self> {
        u1.ensure_same_grid(&u2)?;
        Ok(Self {
            components: [u1, u2],
            divergence_free: false,
        })
    }

    /// Constant field `(c1, c2)`.
    pub fn uniform(grid: TorusGrid, c1: f64, c2: f64) -> Self {
        let mut u = Self::zeros(grid);
        u.components[0].coeffs[0] = Complex64::new(c1, 0.0);
        u.components[1].coeffs[0] = Complex64::new(c2, 0.0);
        u
    }

    /// Checks `max_k |2πi k·û(k)| <= 1e-10 ‖û‖` and flags the field divergence-free.
    pub fn into_divergence_free(mut self) -> Result<Self> {
        let resid = self.divergence_residual();
        let scale = self.coeff_norm();
        if resid > 1e-10 * scale.max(f64::MIN_POSITIVE) && resid > 0.0 {
            return Err(invalid(
                "vector field",
                format!("divergence residual {resid:e} exceeds tolerance (norm {scale:e})"),
            ));
        }
        self.divergence_free = true;
        Ok(self)
    }

    pub(crate) fn with_flag(mut self, divergence_free: bool) -> Self {
        self.divergence_free = divergence_free;
        self
    }

    pub fn is_divergence_free(&self) -> bool {
        self.divergence_free
    }

    pub fn grid(&self) -> TorusGrid {
        self.components[0].grid()
    }

    pub fn component(&self, i: usize) -> &SpectralField {
        &self.components[i]
    }

    pub fn components(&self) -> &[SpectralField; 2] {
        &self.components
    }

    pub(crate) fn components_mut(&mut self) -> &mut [SpectralField; 2] {
        &mut self.components
    }

    pub fn into_components(self) -> [SpectralField; 2] {
        self.components
    }

    /// `max_k |2π k·û(k)|`.
    pub fn divergence_residual(&self) -> f64 {
        let grid = self.grid();
        (0..grid.len())
            .map(|i| {
                let (k1, k2) = grid.mode(i);
                (TWO_PI
                    * (k1 as f64 * self.components[0].coeffs[i]
                        + k2 as f64 * self.components[1].coeffs[i]))
                    .norm()
            })
            .fold(0.0, f64::max)
    }

    /// `sqrt(Σ_k |û(k)|²)`, the L² norm.
    pub fn coeff_norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn inner(&self, other: &VectorField) -> f64 {
        self.components[0].inner(&other.components[0]) + self.components[1].inner(&other.components[1])
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeff_norm()
    }

    pub fn axpy(&mut self, a: f64, other: &VectorField) {
        self.components[0].axpy(a, &other.components[0]);
        self.components[1].axpy(a, &other.components[1]);
        self.divergence_free &= other.divergence_free;
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            components: [self.components[0].scaled(a), self.components[1].scaled(a)],
            divergence_free: self.divergence_free,
        }
    }

    pub fn reality_residue(&self) -> f64 {
        self.components[0]
            .reality_residue()
            .max(self.components[1].reality_residue())
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.components[0]
            .hermitian_defect()
            .max(self.components[1].hermitian_defect())
    }

    /// Physical values of both components.
    pub fn to_physical(&self) -> [Vec<f64>; 2] {
        let (a, b) = pair_to_physical(&self.components[0], &self.components[1]);
        [a, b]
    }

    /// Sup norm of the pointwise Euclidean magnitude.
    pub fn max_speed(&self) -> f64 {
        let [a, b] = self.to_physical();
        a.iter()
            .zip(&b)
            .map(|(x, y)| (x * x + y * y).sqrt())
            .fold(0.0, f64::max)
    }
}

impl Add<&VectorField> for &VectorField {
    type Output = VectorField;
    fn add(self, rhs: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl Sub<&VectorField> for &VectorField {
    type Output = VectorField;
    fn sub(self, rhs: &VectorField) -> VectorField {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

/// Synthesizes two real fields with one complex transform (`a + i b`).
pub(crate) fn pair_to_physical(a: &SpectralField, b: &SpectralField) -> (Vec<f64>, Vec<f64>) {
    let grid = a.grid();
    let mut data: Vec<Complex64> = a
        .coeffs
        .iter()
        .zip(&b.coeffs)
        .map(|(x, y)| x + Complex64::i() * y)
        .collect();
    fft::plan(grid.n()).inverse(&mut data);
    let re = data.iter().map(|z| z.re).collect();
    let im = data.iter().map(|z| z.im).collect();
    (re, im)
}

/// Analyzes two real arrays with one complex transform; results are exactly Hermitian.
pub(crate) fn pair_from_physical(
    grid: TorusGrid,
    x: &[f64],
    y: &[f64],
) -> (SpectralField, SpectralField) {
    let mut data: Vec<Complex64> = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| Complex64::new(a, b))
        .collect();
    fft::plan(grid.n()).forward(&mut data);
    let t = tables(grid);
    let mut a = vec![Complex64::default(); grid.len()];
    let mut b = vec![Complex64::default(); grid.len()];
    for i in 0..grid.len() {
        let z = data[i];
        let zc = data[t.neg[i]].conj();
        a[i] = 0.5 * (z + zc);
        b[i] = Complex64::new(0.0, -0.5) * (z - zc);
    }
    (
        SpectralField { grid, coeffs: a },
        SpectralField { grid, coeffs: b },
    )
}

/// Zero-mean `sin(2πx₁) sin(2πx₂)` vorticity (Taylor–Green cell).
pub fn taylor_green(grid: TorusGrid) -> SpectralField {
    let q = Complex64::new(0.25, 0.0);
    SpectralField::from_modes(grid, &[((1, -1), q), ((1, 1), -q)])
        .expect("unit modes are representable on any valid grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> TorusGrid {
        TorusGrid::new(n).unwrap()
    }

    #[test]
    fn grid_validation_and_indexing() {
        assert!(TorusGrid::new(7).is_err());
        assert!(TorusGrid::new(6).is_err());
        let g = grid(16);
        assert_eq!(g.k_max(), 5);
        for i in 0..g.len() {
            let (k1, k2) = g.mode(i);
            assert_eq!(g.index(k1, k2), Some(i));
            let j = g.neg_index(i);
            if k1.abs() < 8 && k2.abs() < 8 {
                assert_eq!(g.mode(j), (-k1, -k2));
            }
        }
        assert_eq!(g.index(-8, 0), None);
    }

    #[test]
    fn sobolev_norm_of_two_modes() {
        let g = grid(16);
        let one = Complex64::new(1.0, 0.0);
        let f = SpectralField::from_modes(g, &[((1, 0), one), ((1, 2), 0.5 * one)]).unwrap();
        let expect = (2.0 + 0.5 * 5f64.powf(-0.5)).sqrt();
        assert!((sobolev_norm(&f, -0.5) - expect).abs() < 1e-12);
        assert!((sobolev_norm(&f, 0.0) - f.l2_norm()).abs() < 1e-14);
    }

    #[test]
    fn leray_projects_out_longitudinal_part() {
        let g = grid(16);
        let one = Complex64::new(1.0, 0.0);
        let v = VectorField::new(
            SpectralField::from_modes(g, &[((1, 1), one)]).unwrap(),
            SpectralField::zeros(g),
        )
        .unwrap();
        let p = leray_project(&v);
        assert!((p.component(0).coeff(1, 1) - 0.5 * one).norm() < 1e-15);
        assert!((p.component(1).coeff(1, 1) + 0.5 * one).norm() < 1e-15);
        assert!(p.divergence_residual() < 1e-14);
        let pp = leray_project(&p);
        assert!((&pp - &p).coeff_norm() < 1e-15);
        let grad = gradient(&SpectralField::from_modes(g, &[((2, 3), one)]).unwrap());
        assert!(leray_project(&grad).coeff_norm() < 1e-13);
        assert!(VectorField::new(v.component(0).clone(), SpectralField::zeros(g))
            .unwrap()
            .into_divergence_free()
            .is_err());
    }

    #[test]
    fn biot_savart_inverts_curl() {
        let g = grid(32);
        let xi = SpectralField::from_fn(g, |x, y| {
            (TWO_PI * x).sin() * (TWO_PI * 2.0 * y).cos() + 0.3 * (TWO_PI * (x - 3.0 * y)).cos()
        });
        let u = biot_savart(&xi).unwrap();
        assert!(u.is_divergence_free());
        assert!(u.divergence_residual() < 1e-12);
        assert!((&curl(&u) - &xi).max_abs_coeff() < 1e-12);
        let one = Complex64::new(1.0, 0.0);
        let single = SpectralField::from_modes(g, &[((3, 0), one)]).unwrap();
        let v = biot_savart(&single).unwrap();
        let mag = v.component(1).coeff(3, 0).norm();
        assert!((mag - 1.0 / (TWO_PI * 3.0)).abs() < 1e-14);
        assert!(biot_savart(&SpectralField::from_fn(g, |_, _| 1.0)).is_err());
    }

    #[test]
    fn taylor_green_is_steady_for_transport() {
        let g = grid(32);
        let xi = taylor_green(g);
        let phys = xi.to_physical();
        let (x, y) = g.point(37);
        assert!((phys[37] - (TWO_PI * x).sin() * (TWO_PI * y).sin()).abs() < 1e-12);
        let u = biot_savart(&xi).unwrap();
        let adv = transport_term(&u, &xi).unwrap();
        assert!(adv.max_abs_coeff() < 1e-14);
    }

    #[test]
    fn heat_semigroup_composes() {
        let g = grid(16);
        let f = SpectralField::from_fn(g, |x, y| (TWO_PI * (x + y)).cos() + (TWO_PI * 3.0 * y).sin());
        let a = heat_propagate(&heat_propagate(&f, 0.01).unwrap(), 0.02).unwrap();
        let b = heat_propagate(&f, 0.03).unwrap();
        assert!((&a - &b).max_abs_coeff() < 1e-15);
        let c = f.coeff(1, 1);
        let decay = (-4.0 * std::f64::consts::PI.powi(2) * 2.0 * 0.03).exp();
        assert!((b.coeff(1, 1) - c * decay).norm() < 1e-15);
        assert!(heat_propagate(&f, -1.0).is_err());
        assert!(heat_propagate(&f, f64::NAN).is_err());
    }

    #[test]
    fn parseval_and_roundtrip() {
        let g = grid(16);
        let f = SpectralField::from_fn(g, |x, y| (x * 7.1).sin() * (y * 3.3 + x).cos());
        let phys = f.to_physical();
        let mean_sq: f64 = phys.iter().map(|v| v * v).sum::<f64>() / g.len() as f64;
        assert!((mean_sq - f.l2_norm().powi(2)).abs() < 1e-12);
        let back = SpectralField::from_physical(g, &phys);
        assert!((&back - &f).max_abs_coeff() < 1e-14);
        assert_eq!(f.hermitian_defect(), 0.0);
    }

    #[test]
    fn fractional_powers_compose() {
        let g = grid(16);
        let one = Complex64::new(1.0, 0.0);
        let f = SpectralField::from_modes(g, &[((1, 2), one), ((3, -1), one)]).unwrap();
        let h = fractional_laplacian_power(&fractional_laplacian_power(&f, 0.7).unwrap(), -0.7).unwrap();
        assert!((&h - &f).max_abs_coeff() < 1e-14);
        let with_mean = SpectralField::from_fn(g, |_, _| 2.0);
        assert!(fractional_laplacian_power(&with_mean, -0.5).is_err());
        assert!(fractional_laplacian_power(&with_mean, 0.5).is_ok());
    }

    #[test]
    fn resample_preserves_low_modes() {
        let f = SpectralField::from_fn(grid(16), |x, y| (TWO_PI * (2.0 * x - y)).sin());
        let up = f.resample(grid(32));
        assert!((up.l2_norm() - f.l2_norm()).abs() < 1e-14);
        assert!((up.resample(grid(16)).coeff(2, -1) - f.coeff(2, -1)).norm() < 1e-15);
    }
}
