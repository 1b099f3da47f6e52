use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::spectral::{vector_sobolev_norm, TorusGrid, VectorField};

/// Piecewise-constant (left endpoint) control `g ∈ L²_t ℋ^α`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlPath {
    dt: f64,
    alpha: f64,
    fields: Vec<VectorField>,
}

impl ControlPath {
    /// Fields must be divergence-free and zero-mean; `fields[m]` acts on `[m dt, (m+1) dt)`.
    pub fn new(dt: f64, alpha: f64, fields: Vec<VectorField>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {dt}")));
        }
        if fields.is_empty() {
            return Err(invalid("control", "needs at least one time slab"));
        }
        let grid = fields[0].grid();
        let mut checked = Vec::with_capacity(fields.len());
        for (m, g) in fields.into_iter().enumerate() {
            if g.grid() != grid {
                return Err(invalid("control", format!("slab {m} is on a different grid")));
            }
            for c in g.components() {
                c.require_zero_mean(1e-12)?;
            }
            checked.push(if g.is_divergence_free() {
                g
            } else {
                g.into_divergence_free()?
            });
        }
        Ok(Self {
            dt,
            alpha,
            fields: checked,
        })
    }

    pub fn zeros(grid: TorusGrid, steps: usize, dt: f64, alpha: f64) -> Self {
        Self {
            dt,
            alpha,
            fields: vec![VectorField::zeros(grid); steps.max(1)],
        }
    }

    /// Same field on every slab.
    pub fn constant(field: VectorField, steps: usize, dt: f64, alpha: f64) -> Result<Self> {
        Self::new(dt, alpha, vec![field; steps.max(1)])
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn steps(&self) -> usize {
        self.fields.len()
    }

    pub fn grid(&self) -> TorusGrid {
        self.fields[0].grid()
    }

    pub fn fields(&self) -> &[VectorField] {
        &self.fields
    }

    pub(crate) fn fields_mut(&mut self) -> &mut [VectorField] {
        &mut self.fields
    }

    /// Left endpoints `t_m = m dt`.
    pub fn times(&self) -> Vec<f64> {
        (0..self.fields.len()).map(|m| m as f64 * self.dt).collect()
    }

    /// Value at time `t`; past the last slab the last value is held.
    pub fn at(&self, t: f64) -> &VectorField {
        let m = ((t / self.dt) + 1e-9).floor().max(0.0) as usize;
        &self.fields[m.min(self.fields.len() - 1)]
    }

    /// `½ Σ_m dt ‖g_m‖²_{H^α}`.
    pub fn cost(&self) -> f64 {
        0.5 * self.dt
            * self
                .fields
                .iter()
                .map(|g| vector_sobolev_norm(g, self.alpha).powi(2))
                .sum::<f64>()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            dt: self.dt,
            alpha: self.alpha,
            fields: self.fields.iter().map(|g| g.scaled(c)).collect(),
        }
    }

    /// `Σ dt ‖g¹ - g²‖²_{L²}` on a common mesh.
    pub fn l2_distance_sq(&self, other: &ControlPath) -> f64 {
        self.fields
            .iter()
            .zip(&other.fields)
            .map(|(a, b)| self.dt * (a - b).coeff_norm().powi(2))
            .sum()
    }

    /// Sparse checkpoint: one record per nonzero mode of `ℤ²₊ ∪ {0}` per slab.
    pub fn checkpoint(&self) -> ControlCheckpoint {
        let grid = self.grid();
        let slabs = self
            .fields
            .iter()
            .map(|g| {
                let (c1, c2) = (g.component(0).coeffs(), g.component(1).coeffs());
                (0..grid.len())
                    .filter_map(|i| {
                        let k = grid.mode(i);
                        let upper = k.0 > 0 || (k.0 == 0 && k.1 >= 0);
                        if upper && (c1[i].norm() > 0.0 || c2[i].norm() > 0.0) {
                            Some(SparseMode {
                                k: [k.0, k.1],
                                u1: [c1[i].re, c1[i].im],
                                u2: [c2[i].re, c2[i].im],
                            })
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        ControlCheckpoint {
            n: grid.n(),
            dt: self.dt,
            alpha: self.alpha,
            slabs,
        }
    }

    pub fn from_checkpoint(cp: &ControlCheckpoint) -> Result<Self> {
        let grid = TorusGrid::new(cp.n)?;
        let fields = cp
            .slabs
            .iter()
            .map(|slab| {
                let m1: Vec<_> = slab
                    .iter()
                    .map(|m| ((m.k[0], m.k[1]), Complex64::new(m.u1[0], m.u1[1])))
                    .collect();
                let m2: Vec<_> = slab
                    .iter()
                    .map(|m| ((m.k[0], m.k[1]), Complex64::new(m.u2[0], m.u2[1])))
                    .collect();
                VectorField::new(
                    crate::spectral::SpectralField::from_modes(grid, &m1)?,
                    crate::spectral::SpectralField::from_modes(grid, &m2)?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(cp.dt, cp.alpha, fields)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMode {
    pub k: [i64; 2],
    pub u1: [f64; 2],
    pub u2: [f64; 2],
}

/// Serializable control path (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlCheckpoint {
    pub n: usize,
    pub dt: f64,
    pub alpha: f64,
    pub slabs: Vec<Vec<SparseMode>>,
}
