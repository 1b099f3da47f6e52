//! Transport noise `W^{n,α} = Σ_{k} |k|^{-α} a_k e_k B^k` on the 2-torus.
//!
//! In two dimensions each wavevector carries a single divergence-free unit
//! direction `a_k = ±k^⊥/|k|` (`+` on the half-lattice `ℤ²₊`, `-` on `ℤ²₋`),
//! so that `a_{-k} = a_k` and the field is real once `B^{-k} = conj(B^k)`.
//!
//! Complex increments have `E|ΔB^k|² = dt` with independent `N(0, dt/2)` real
//! and imaginary parts, which gives `W^α` the covariance `(-Δ)^{-α} Π`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::gaussian_pair;
use crate::spectral::{leray_project, SpectralField, TorusGrid, VectorField};

/// `c_d = d/(d-1)` for `d = 2`.
pub const C_D: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// `0 < |k| <= n`
    LowPass,
    /// `n <= |k| <= 2n`
    Band,
}

impl Window {
    fn contains(self, n: usize, k2: i64) -> bool {
        let n2 = (n * n) as i64;
        match self {
            Window::LowPass => k2 > 0 && k2 <= n2,
            Window::Band => k2 >= n2 && k2 <= 4 * n2,
        }
    }

    /// Largest `|k|` in the window.
    pub fn outer_radius(self, n: usize) -> usize {
        match self {
            Window::LowPass => n,
            Window::Band => 2 * n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseMode {
    pub k: (i64, i64),
    /// Unit direction `a_k ⟂ k`.
    pub a: [f64; 2],
    /// `|k|^{-α}`
    pub weight: f64,
}

impl NoiseMode {
    pub fn is_positive(&self) -> bool {
        in_positive_half(self.k)
    }
}

/// `ℤ²₊ = {k₁ > 0} ∪ {k₁ = 0, k₂ > 0}`.
#[inline]
pub fn in_positive_half((k1, k2): (i64, i64)) -> bool {
    k1 > 0 || (k1 == 0 && k2 > 0)
}

/// Basis direction `a_k` for `k ≠ 0`.
pub fn basis_direction(k: (i64, i64)) -> [f64; 2] {
    let norm = ((k.0 * k.0 + k.1 * k.1) as f64).sqrt();
    let sign = if in_positive_half(k) { 1.0 } else { -1.0 };
    [-sign * k.1 as f64 / norm, sign * k.0 as f64 / norm]
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    alpha: f64,
    cutoff: usize,
    window: Window,
    modes: Vec<NoiseMode>,
    epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSummary {
    pub alpha: f64,
    pub n: usize,
    pub window: Window,
    pub epsilon: f64,
    pub mode_count: usize,
}

/// Builds the noise basis for `W^{n,α}` (or the band variant) and its scaling `ε_n`.
pub fn build_noise_model(alpha: f64, n: usize, window: Window) -> Result<NoiseModel> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if n < 1 {
        return Err(invalid("n", "noise cutoff must be >= 1"));
    }
    let r = window.outer_radius(n) as i64;
    let mut modes = Vec::new();
    for k1 in -r..=r {
        for k2 in -r..=r {
            let k2n = k1 * k1 + k2 * k2;
            if window.contains(n, k2n) {
                modes.push(NoiseMode {
                    k: (k1, k2),
                    a: basis_direction((k1, k2)),
                    weight: (k2n as f64).powf(-0.5 * alpha),
                });
            }
        }
    }
    let trace: f64 = modes.iter().map(|m| m.weight * m.weight).sum();
    Ok(NoiseModel {
        alpha,
        cutoff: n,
        window,
        modes,
        epsilon: C_D / trace,
    })
}

impl NoiseModel {
    /// Every mode resolvable on `grid` after dealiasing: the discrete stand-in for `W^α`.
    pub fn resolvable(alpha: f64, grid: TorusGrid) -> Result<Self> {
        build_noise_model(alpha, grid.k_max(), Window::LowPass)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn modes(&self) -> &[NoiseMode] {
        &self.modes
    }

    /// `ε_n = c_d (Σ_{window} |k|^{-2α})^{-1}`.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `Σ_{window} |k|^{-2α}`, the trace of `Q^{n,α}` per direction.
    pub fn weight_trace(&self) -> f64 {
        self.modes.iter().map(|m| m.weight * m.weight).sum()
    }

    pub fn contains(&self, k: (i64, i64)) -> bool {
        self.window.contains(self.cutoff, k.0 * k.0 + k.1 * k.1)
    }

    pub fn outer_radius(&self) -> usize {
        self.window.outer_radius(self.cutoff)
    }

    pub fn summary(&self) -> NoiseSummary {
        NoiseSummary {
            alpha: self.alpha,
            n: self.cutoff,
            window: self.window,
            epsilon: self.epsilon,
            mode_count: self.modes.len(),
        }
    }
}

/// Seeded source of the complex Brownian motions `B^k`, `k ∈ ℤ²₊`.
///
/// Increments are keyed by `(seed, k, step)`; `B^{-k}` is never drawn, it is
/// the conjugate of `B^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianDriver {
    seed: u64,
    step: u64,
    time: f64,
}

impl BrownianDriver {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            step: 0,
            time: 0.0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// `ΔB^k` over step `step` of length `dt` (`k ∈ ℤ²₊`).
    #[inline]
    pub fn increment_at(&self, k: (i64, i64), step: u64, dt: f64) -> Complex64 {
        let (a, b) = gaussian_pair(self.seed, k.0, k.1, step);
        let s = (0.5 * dt).sqrt();
        Complex64::new(s * a, s * b)
    }

    fn advance(&mut self, dt: f64) {
        self.step += 1;
        self.time += dt;
    }
}

/// Precomputed mode placement of one model on one grid.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    grid: TorusGrid,
    // (k, storage index of k, storage index of -k, weight * a_k)
    entries: Vec<((i64, i64), usize, usize, [f64; 2])>,
}

impl NoiseSampler {
    pub fn new(model: &NoiseModel, grid: TorusGrid) -> Result<Self> {
        let mut entries = Vec::new();
        for m in model.modes.iter().filter(|m| m.is_positive()) {
            let idx = grid.index(m.k.0, m.k.1).ok_or_else(|| {
                invalid(
                    "noise",
                    format!("mode {:?} is not representable on an N = {} grid", m.k, grid.n()),
                )
            })?;
            entries.push((
                m.k,
                idx,
                grid.neg_index(idx),
                [m.weight * m.a[0], m.weight * m.a[1]],
            ));
        }
        Ok(Self { grid, entries })
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    /// Noise increment field for `step` (without the `√ε_n` factor).
    pub fn field_at(&self, driver: &BrownianDriver, step: u64, dt: f64) -> VectorField {
        self.field_scaled(driver, step, dt, 1.0)
    }

    pub(crate) fn field_scaled(
        &self,
        driver: &BrownianDriver,
        step: u64,
        dt: f64,
        scale: f64,
    ) -> VectorField {
        let mut u1 = SpectralField::zeros(self.grid);
        let mut u2 = SpectralField::zeros(self.grid);
        {
            let (c1, c2) = (u1.coeffs_mut(), u2.coeffs_mut());
            for &(k, i, j, wa) in &self.entries {
                let db = scale * driver.increment_at(k, step, dt);
                c1[i] = wa[0] * db;
                c2[i] = wa[1] * db;
                c1[j] = wa[0] * db.conj();
                c2[j] = wa[1] * db.conj();
            }
        }
        VectorField::new(u1, u2)
            .expect("same grid")
            .with_flag(true)
    }
}

/// One step of `Σ |k|^{-α} σ_k ΔB^k`, advancing the driver clock.
pub fn sample_noise_increment(
    model: &NoiseModel,
    driver: &mut BrownianDriver,
    grid: TorusGrid,
    dt: f64,
) -> Result<VectorField> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let field = NoiseSampler::new(model, grid)?.field_at(driver, driver.step, dt);
    driver.advance(dt);
    Ok(field)
}

/// Samples several models on one driver step (shared modes coincide), advancing once.
pub fn sample_coupled_increments(
    samplers: &[&NoiseSampler],
    driver: &mut BrownianDriver,
    dt: f64,
) -> Result<Vec<VectorField>> {
    if !(dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    let out = samplers
        .iter()
        .map(|s| s.field_at(driver, driver.step, dt))
        .collect();
    driver.advance(dt);
    Ok(out)
}

/// Predicted variance of `∫⟨f_r, dW^{n,α}_r⟩`: left-point quadrature of
/// `∫ Σ_{window} |k|^{-2α} |a_k · f̂_r(k)|² dr`.
pub fn ito_integral_variance(model: &NoiseModel, path: &[VectorField], dt: f64) -> f64 {
    let mut total = 0.0;
    for f in path {
        let grid = f.grid();
        let (c1, c2) = (f.component(0).coeffs(), f.component(1).coeffs());
        for m in &model.modes {
            if let Some(i) = grid.index(m.k.0, m.k.1) {
                let proj = m.a[0] * c1[i] + m.a[1] * c2[i];
                total += dt * m.weight * m.weight * proj.norm_sqr();
            }
        }
    }
    total
}

/// `Q^α f = (-Δ)^{-α} Π f`.
pub fn covariance_apply(f: &VectorField, alpha: f64) -> Result<VectorField> {
    f.component(0).require_zero_mean(1e-12)?;
    f.component(1).require_zero_mean(1e-12)?;
    let mut out = leray_project(f);
    let grid = f.grid();
    for comp in out.components_mut().iter_mut() {
        let c = comp.coeffs_mut();
        c[0] = Complex64::default();
        for (i, z) in c.iter_mut().enumerate().skip(1) {
            *z *= grid.k_squared(i).powf(-alpha);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::gradient;

    fn brute_epsilon(alpha: f64, n: i64) -> f64 {
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

    #[test]
    fn epsilon_matches_lattice_sums() {
        let m = build_noise_model(0.5, 1, Window::LowPass).unwrap();
        assert_eq!(m.modes().len(), 4);
        assert!((m.epsilon() - 0.5).abs() < 1e-15);
        // alpha = 1 is outside the open interval, so the n = 2 value is checked
        // on the brute sum directly: 4 + 4/2 + 4/4 = 7.
        assert!((brute_epsilon(1.0, 2) - 2.0 / 7.0).abs() < 1e-15);
        for &alpha in &[0.1, 0.37, 0.9] {
            let m = build_noise_model(alpha, 1, Window::LowPass).unwrap();
            assert!((m.epsilon() - 0.5).abs() < 1e-15);
        }
        for &(alpha, n) in &[(0.25, 5usize), (0.5, 9), (0.75, 13)] {
            let m = build_noise_model(alpha, n, Window::LowPass).unwrap();
            assert!((m.epsilon() - brute_epsilon(alpha, n as i64)).abs() < 1e-14);
            assert!((m.epsilon() * m.weight_trace() - C_D).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_noise_model(0.0, 3, Window::LowPass).is_err());
        assert!(build_noise_model(1.0, 3, Window::LowPass).is_err());
        assert!(build_noise_model(0.5, 0, Window::LowPass).is_err());
        let mut d = BrownianDriver::new(1);
        let m = build_noise_model(0.5, 2, Window::LowPass).unwrap();
        let g = TorusGrid::new(16).unwrap();
        assert!(sample_noise_increment(&m, &mut d, g, 0.0).is_err());
    }

    #[test]
    fn basis_is_unit_orthogonal_and_even() {
        let m = build_noise_model(0.4, 6, Window::LowPass).unwrap();
        for mode in m.modes() {
            let (k1, k2) = mode.k;
            assert!((mode.a[0] * k1 as f64 + mode.a[1] * k2 as f64).abs() < 1e-15);
            assert!((mode.a[0].hypot(mode.a[1]) - 1.0).abs() < 1e-15);
            assert_eq!(basis_direction((-k1, -k2)), mode.a);
        }
    }

    #[test]
    fn epsilon_scales_like_power_law() {
        for &alpha in &[0.25, 0.5, 0.75] {
            let ratios: Vec<f64> = [8usize, 16, 32, 64]
                .iter()
                .map(|&n| {
                    let m = build_noise_model(alpha, n, Window::LowPass).unwrap();
                    m.epsilon() / (n as f64).powf(2.0 * alpha - 2.0)
                })
                .collect();
            let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
            let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
            assert!(max / min < 2.0, "alpha {alpha}: {ratios:?}");
        }
    }

    #[test]
    fn increments_are_real_divergence_free_and_supported() {
        let grid = TorusGrid::new(16).unwrap();
        let m = build_noise_model(0.5, 1, Window::LowPass).unwrap();
        let mut d = BrownianDriver::new(42);
        let w = sample_noise_increment(&m, &mut d, grid, 0.01).unwrap();
        assert_eq!(d.step(), 1);
        assert_eq!(w.divergence_residual(), 0.0);
        assert_eq!(w.hermitian_defect(), 0.0);
        assert!(w.reality_residue() < 1e-10);
        for i in 0..grid.len() {
            let (k1, k2) = grid.mode(i);
            if k1 * k1 + k2 * k2 != 1 {
                assert_eq!(w.component(0).coeffs()[i].norm(), 0.0);
                assert_eq!(w.component(1).coeffs()[i].norm(), 0.0);
            }
        }
    }

    #[test]
    fn replay_is_bitwise_identical() {
        let grid = TorusGrid::new(16).unwrap();
        let m = build_noise_model(0.5, 4, Window::LowPass).unwrap();
        let mut d1 = BrownianDriver::new(5);
        let mut d2 = BrownianDriver::new(5);
        for _ in 0..3 {
            let a = sample_noise_increment(&m, &mut d1, grid, 0.1).unwrap();
            let b = sample_noise_increment(&m, &mut d2, grid, 0.1).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn coupled_models_differ_only_on_the_outer_shell() {
        let grid = TorusGrid::new(32).unwrap();
        let lo = build_noise_model(0.5, 3, Window::LowPass).unwrap();
        let hi = build_noise_model(0.5, 7, Window::LowPass).unwrap();
        let (s_lo, s_hi) = (
            NoiseSampler::new(&lo, grid).unwrap(),
            NoiseSampler::new(&hi, grid).unwrap(),
        );
        let mut d = BrownianDriver::new(11);
        let v = sample_coupled_increments(&[&s_lo, &s_hi], &mut d, 0.05).unwrap();
        let diff = &v[1] - &v[0];
        for i in 0..grid.len() {
            let (k1, k2) = grid.mode(i);
            let r2 = k1 * k1 + k2 * k2;
            let nonzero = diff.component(0).coeffs()[i].norm() + diff.component(1).coeffs()[i].norm() > 0.0;
            if r2 <= 9 {
                assert!(!nonzero);
            } else if r2 > 49 {
                assert!(!nonzero);
            }
        }
    }

    #[test]
    fn band_windows_are_disjoint_for_doubling_cutoffs() {
        let a = build_noise_model(0.5, 4, Window::Band).unwrap();
        let b = build_noise_model(0.5, 9, Window::Band).unwrap();
        assert!(a.modes().iter().all(|m| !b.contains(m.k)));
    }

    #[test]
    fn empirical_mode_variance_matches_weight() {
        let grid = TorusGrid::new(16).unwrap();
        let alpha = 0.5;
        let m = build_noise_model(alpha, 3, Window::LowPass).unwrap();
        let sampler = NoiseSampler::new(&m, grid).unwrap();
        let d = BrownianDriver::new(3);
        let idx = grid.index(2, 1).unwrap();
        let a = basis_direction((2, 1));
        let (mut re2, mut im2) = (0.0, 0.0);
        let samples = 10_000u64;
        for step in 0..samples {
            let w = sampler.field_at(&d, step, 1.0);
            let c = a[0] * w.component(0).coeffs()[idx] + a[1] * w.component(1).coeffs()[idx];
            re2 += c.re * c.re;
            im2 += c.im * c.im;
        }
        let expected = 5f64.powf(-alpha) * 0.5;
        assert!((re2 / samples as f64 / expected - 1.0).abs() < 0.05);
        assert!((im2 / samples as f64 / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn ito_variance_kills_gradients() {
        let grid = TorusGrid::new(16).unwrap();
        let m = build_noise_model(0.5, 4, Window::LowPass).unwrap();
        let phi = SpectralField::from_fn(grid, |x, y| (std::f64::consts::TAU * (x + 2.0 * y)).sin());
        let g = gradient(&phi);
        assert!(ito_integral_variance(&m, &[g.clone(), g], 0.5) < 1e-20);
        assert_eq!(ito_integral_variance(&m, &[VectorField::zeros(grid)], 1.0), 0.0);
    }

    #[test]
    fn covariance_is_symmetric_psd_and_kills_gradients() {
        use rand::{Rng, SeedableRng};
        let grid = TorusGrid::new(16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let random_field = |rng: &mut rand_chacha::ChaCha8Rng| {
            let mut comps = Vec::new();
            for _ in 0..2 {
                let mut modes = Vec::new();
                for k1 in -3..=3i64 {
                    for k2 in 0..=3i64 {
                        if (k1, k2) != (0, 0) && in_positive_half((k1, k2)) {
                            modes.push(((k1, k2), Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))));
                        }
                    }
                }
                comps.push(SpectralField::from_modes(grid, &modes).unwrap());
            }
            let u2 = comps.pop().unwrap();
            let u1 = comps.pop().unwrap();
            VectorField::new(u1, u2).unwrap()
        };
        for _ in 0..50 {
            let f = random_field(&mut rng);
            let g = random_field(&mut rng);
            let qf = covariance_apply(&f, 0.7).unwrap();
            let qg = covariance_apply(&g, 0.7).unwrap();
            let (a, b) = (qf.inner(&g), f.inner(&qg));
            assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300));
            assert!(qf.inner(&f) >= 0.0);
        }
        // single divergence-free mode with |k|² = 4, alpha = 1
        let a = basis_direction((2, 0));
        let one = Complex64::new(1.0, 0.0);
        let f = VectorField::new(
            SpectralField::from_modes(grid, &[((2, 0), one * a[0])]).unwrap(),
            SpectralField::from_modes(grid, &[((2, 0), one * a[1])]).unwrap(),
        )
        .unwrap();
        let q = covariance_apply(&f, 1.0).unwrap();
        assert!((q.component(1).coeff(2, 0) - 0.25 * f.component(1).coeff(2, 0)).norm() < 1e-15);
        let phi = SpectralField::from_modes(grid, &[((1, 2), one)]).unwrap();
        assert!(covariance_apply(&gradient(&phi), 0.3).unwrap().coeff_norm() < 1e-14);
        assert!(covariance_apply(&VectorField::uniform(grid, 1.0, 0.0), 0.3).is_err());
    }
}
