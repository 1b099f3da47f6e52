//! Numerical probes of the auxiliary heat-kernel, transport and lattice-sum
//! inequalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::derive_seed;
use crate::spectral::{
    heat_propagate, leray_project, sobolev_norm, tables, transport_term, vector_sobolev_norm, SpectralField,
    TorusGrid, VectorField,
};

const FOUR_PI_SQ: f64 = 4.0 * std::f64::consts::PI * std::f64::consts::PI;

/// `‖∫₀^{t_M} P_{t_M-r} f_r dr‖²_{H^{s+1}} / ∫₀^{t_M} ‖f_r‖²_{H^s} dr`,
/// maximized over `M`, for `f` constant on slabs of width `dt` (exact in time).
pub fn heat_integral_ratio(slabs: &[SpectralField], dt: f64, s: f64) -> Result<f64> {
    let Some(first) = slabs.first() else {
        return Err(invalid("slabs", "need at least one"));
    };
    let grid = first.grid();
    let t = tables(grid);
    let mut acc = SpectralField::zeros(grid);
    let mut energy = 0.0;
    let mut best: f64 = 0.0;
    for f in slabs {
        f.require_zero_mean(1e-12)?;
        // I ← P_dt I + ∫₀^dt P_r f dr
        for ((z, fz), &k2) in acc.coeffs_mut().iter_mut().zip(f.coeffs()).zip(&t.ksq).skip(1) {
            let lam = FOUR_PI_SQ * k2;
            let decay = (-lam * dt).exp();
            *z = *z * decay + *fz * ((1.0 - decay) / lam);
        }
        energy += dt * sobolev_norm(f, s).powi(2);
        if energy > 0.0 {
            best = best.max(sobolev_norm(&acc, s + 1.0).powi(2) / energy);
        }
    }
    Ok(best)
}

/// Per-mode supremum of the ratio in [`heat_integral_ratio`]: `1/(8π²)`.
pub fn heat_integral_bound() -> f64 {
    1.0 / (2.0 * FOUR_PI_SQ)
}

/// `‖P_t u‖_{H^{a+ρ}} t^{ρ/2} / ‖u‖_{H^a}` for zero-mean `u`.
pub fn heat_smoothing_ratio(u: &SpectralField, a: f64, rho: f64, t: f64) -> Result<f64> {
    u.require_zero_mean(1e-12)?;
    Ok(sobolev_norm(&heat_propagate(u, t)?, a + rho) * t.powf(rho / 2.0) / sobolev_norm(u, a))
}

/// `sup_{y>0} y^{ρ/2} e^{-4π² y} = (ρ/(8π² e))^{ρ/2}`.
pub fn heat_smoothing_bound(rho: f64) -> f64 {
    if rho == 0.0 {
        return 1.0;
    }
    (rho / (2.0 * FOUR_PI_SQ * std::f64::consts::E)).powf(rho / 2.0)
}

/// `‖(I - P_t) u‖_{H^{a-ρ}} / (t^{ρ/2} ‖u‖_{H^a})` for zero-mean `u`, `ρ ∈ [0, 2]`.
pub fn heat_defect_ratio(u: &SpectralField, a: f64, rho: f64, t: f64) -> Result<f64> {
    if !(0.0..=2.0).contains(&rho) {
        return Err(invalid("rho", format!("must lie in [0, 2], got {rho}")));
    }
    u.require_zero_mean(1e-12)?;
    let d = u - &heat_propagate(u, t)?;
    Ok(sobolev_norm(&d, a - rho) / (t.powf(rho / 2.0) * sobolev_norm(u, a)))
}

/// `(4π²)^{ρ/2}`, from `1 - e^{-x} <= x^{ρ/2}` on `x >= 0`.
pub fn heat_defect_bound(rho: f64) -> f64 {
    FOUR_PI_SQ.powf(rho / 2.0)
}

/// The three transport-term inequalities, as ratios `lhs / rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum TransportBound {
    /// `‖V·∇f‖_{H^{-1-b}} / (‖V‖_{H^{1+a}} ‖f‖_{H^{-b}})`, `0 < b < a <= 1`
    Smooth { a: f64, b: f64 },
    /// `‖V·∇f‖_{H^{-1-b}} / (‖V‖_{H^{1-b}} ‖f‖_{L²})`, `0 < b < 1`
    L2 { b: f64 },
    /// `‖V·∇f‖_{H^{-2-b-ε}} / (‖V‖_{H^a} ‖f‖_{H^{-b}})`, `0 < b <= a < 1`
    Rough { a: f64, b: f64, eps: f64 },
}

impl TransportBound {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            TransportBound::Smooth { a, b } => 0.0 < b && b < a && a <= 1.0,
            TransportBound::L2 { b } => 0.0 < b && b < 1.0,
            TransportBound::Rough { a, b, eps } => 0.0 < b && b <= a && a < 1.0 && eps > 0.0,
        };
        if !ok {
            return Err(invalid("transport bound", format!("parameters out of range: {self:?}")));
        }
        Ok(())
    }

    pub fn ratio(&self, v: &VectorField, f: &SpectralField) -> Result<f64> {
        let prod = transport_term(v, f)?;
        let (lhs, rhs) = match *self {
            TransportBound::Smooth { a, b } => (
                sobolev_norm(&prod, -1.0 - b),
                vector_sobolev_norm(v, 1.0 + a) * sobolev_norm(f, -b),
            ),
            TransportBound::L2 { b } => (sobolev_norm(&prod, -1.0 - b), vector_sobolev_norm(v, 1.0 - b) * f.l2_norm()),
            TransportBound::Rough { a, b, eps } => (
                sobolev_norm(&prod, -2.0 - b - eps),
                vector_sobolev_norm(v, a) * sobolev_norm(f, -b),
            ),
        };
        Ok(lhs / rhs)
    }
}

/// Zero-mean real field on `|k|_∞ <= k_cut` with `|f̂(k)| ~ |k|^{-p}` times
/// a complex Gaussian.
pub fn random_power_field(grid: TorusGrid, k_cut: i64, p: f64, rng: &mut impl Rng) -> SpectralField {
    let mut modes = Vec::new();
    for k1 in 0..=k_cut {
        for k2 in -k_cut..=k_cut {
            if k1 == 0 && k2 <= 0 {
                continue;
            }
            let amp = ((k1 * k1 + k2 * k2) as f64).powf(-p / 2.0);
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = Complex64::new(re, im) * amp;
            modes.push(((k1, k2), z));
            modes.push(((-k1, -k2), z.conj()));
        }
    }
    SpectralField::from_modes(grid, &modes).expect("modes inside the grid")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioSuite {
    pub grid_n: usize,
    pub samples: usize,
    pub max_ratio: f64,
}

/// Max of [`TransportBound::ratio`] over random pairs supported on
/// `|k|_∞ <= N/6`, so the dealiased product is exact.
pub fn transport_ratio_suite(bound: TransportBound, grid_n: usize, samples: usize, seed: u64) -> Result<RatioSuite> {
    bound.validate()?;
    let grid = TorusGrid::new(grid_n)?;
    let k_cut = (grid_n / 6) as i64;
    let ratios = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
            let pv = rng.random_range(0.5..4.0);
            let pf = rng.random_range(-1.0..3.0);
            let v = VectorField::new(
                random_power_field(grid, k_cut, pv, &mut rng),
                random_power_field(grid, k_cut, pv, &mut rng),
            )?;
            let v = leray_project(&v);
            let f = random_power_field(grid, k_cut, pf, &mut rng);
            bound.ratio(&v, &f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RatioSuite {
        grid_n,
        samples,
        max_ratio: ratios.into_iter().fold(0.0, f64::max),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSup {
    pub radius: usize,
    /// `max_{0<|j|<=j_max} |j|^δ Σ_{0<|l|<=R, l≠j} |l|^{-a} |j-l|^{-b}`
    pub sup: f64,
    pub argmax: [i64; 2],
}

/// Truncated lattice convolution sum of two inverse powers, weighted by
/// `|j|^δ` and maximized over `0 < |j| <= j_max` (Euclidean norms, `d = 2`).
pub fn lattice_convolution_sup(a: f64, b: f64, delta: f64, j_max: usize, radius: usize) -> Result<LatticeSup> {
    if !(a > 0.0 && b > 0.0 && a + b > 2.0) {
        return Err(invalid("a, b", format!("need a, b > 0 and a + b > d = 2, got a = {a}, b = {b}")));
    }
    if !(delta > 0.0 && delta < a.min(b).min(a + b - 2.0)) {
        return Err(invalid(
            "delta",
            format!("must satisfy 0 < delta < min(a, b, a + b - d), got {delta}"),
        ));
    }
    let r = radius as i64;
    let jm = j_max as i64;
    // |m|² ranges up to (R + j_max)² · 2
    let top = ((r + jm) * (r + jm) * 2) as usize;
    let pow_a: Vec<f64> = (0..=top).map(|q| if q == 0 { 0.0 } else { (q as f64).powf(-a / 2.0) }).collect();
    let pow_b: Vec<f64> = if a == b {
        pow_a.clone()
    } else {
        (0..=top).map(|q| if q == 0 { 0.0 } else { (q as f64).powf(-b / 2.0) }).collect()
    };
    let ls: Vec<(i64, i64, f64)> = (-r..=r)
        .flat_map(|l1| (-r..=r).map(move |l2| (l1, l2)))
        .filter(|&(l1, l2)| {
            let q = l1 * l1 + l2 * l2;
            q > 0 && q <= r * r
        })
        .map(|(l1, l2)| (l1, l2, pow_a[(l1 * l1 + l2 * l2) as usize]))
        .collect();
    // the truncated sum is invariant under the lattice symmetries: one octant suffices
    let js: Vec<(i64, i64)> = (1..=jm)
        .flat_map(|j1| (0..=j1).map(move |j2| (j1, j2)))
        .filter(|&(j1, j2)| j1 * j1 + j2 * j2 <= jm * jm)
        .collect();
    let values: Vec<f64> = js
        .par_iter()
        .map(|&(j1, j2)| {
            let s: f64 = ls
                .iter()
                .map(|&(l1, l2, wa)| {
                    let (m1, m2) = (j1 - l1, j2 - l2);
                    wa * pow_b[(m1 * m1 + m2 * m2) as usize]
                })
                .sum();
            ((j1 * j1 + j2 * j2) as f64).powf(delta / 2.0) * s
        })
        .collect();
    let (idx, sup) = values
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    Ok(LatticeSup {
        radius,
        sup,
        argmax: [js[idx].0, js[idx].1],
    })
}
