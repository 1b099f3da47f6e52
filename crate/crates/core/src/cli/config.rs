use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::detpde::DriftSpec;
use crate::error::{Error, Result};
use crate::noise::Window;
use crate::spectral::{taylor_green, SpectralField, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    LlnTransport,
    CltTransport,
    LlnEuler,
    CltEuler,
    LdpMinimize,
    LdpTail,
    DualChecks,
    NoiseChecks,
}

impl ExperimentKind {
    pub fn is_rate(self) -> bool {
        matches!(
            self,
            Self::LlnTransport | Self::CltTransport | Self::LlnEuler | Self::CltEuler
        )
    }

    pub fn is_euler(self) -> bool {
        matches!(self, Self::LlnEuler | Self::CltEuler)
    }

    fn uses_noise(self) -> bool {
        self.is_rate() || self == Self::LdpTail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    TaylorGreen,
    /// Gaussian coefficients on `k_lo <= |k| <= k_hi`, unit `L²` norm.
    RandomBand { k_lo: usize, k_hi: usize, seed: u64 },
    /// CSV with header `k1,k2,re,im`; relative paths resolve against the config file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Norms {
    pub s: Option<f64>,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LdpOptions {
    /// Terminal penalty weight.
    pub lambda: f64,
    pub iterations: usize,
    pub control_radius: f64,
    /// Scale of the terminal multiplier that plants the target.
    pub plant_scale: f64,
    /// Controls in the lower-bound sweep (0 skips it).
    pub sweep: usize,
    /// Exceedance radius `R` of `ldp_tail`.
    pub tail_radius: Option<f64>,
}

impl Default for LdpOptions {
    fn default() -> Self {
        Self {
            lambda: 1e8,
            iterations: 300,
            control_radius: 3.0,
            plant_scale: 1.0,
            sweep: 10,
            tail_radius: None,
        }
    }
}

fn default_drift() -> DriftSpec {
    DriftSpec::taylor_green(1.0)
}

/// One experiment, as read from JSON. Missing fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default = "defaults::grid")]
    pub grid: usize,
    #[serde(default = "defaults::dt")]
    pub dt: f64,
    #[serde(default = "defaults::t_final", alias = "T")]
    pub t_final: f64,
    #[serde(default = "defaults::alpha")]
    pub alpha: f64,
    #[serde(default = "defaults::n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "defaults::paths")]
    pub paths: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_drift")]
    pub drift: DriftSpec,
    #[serde(default = "defaults::initial")]
    pub initial: InitialSpec,
    #[serde(default)]
    pub norms: Norms,
    #[serde(default = "defaults::window")]
    pub window: Window,
    #[serde(default = "defaults::saves")]
    pub saves: usize,
    #[serde(default)]
    pub ldp: LdpOptions,
    #[serde(default = "defaults::output")]
    pub output: PathBuf,
    /// Directory used to resolve relative paths (the config file's own).
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

mod defaults {
    use super::*;

    pub fn grid() -> usize {
        64
    }
    pub fn dt() -> f64 {
        2e-4
    }
    pub fn t_final() -> f64 {
        0.2
    }
    pub fn alpha() -> f64 {
        0.5
    }
    pub fn n_list() -> Vec<usize> {
        vec![4, 8, 16]
    }
    pub fn paths() -> usize {
        64
    }
    pub fn initial() -> InitialSpec {
        InitialSpec::TaylorGreen
    }
    pub fn window() -> Window {
        Window::LowPass
    }
    pub fn saves() -> usize {
        10
    }
    pub fn output() -> PathBuf {
        PathBuf::from("tnl-out")
    }
}

/// Norm exponents after kind-specific defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedNorms {
    /// Error measured in `H^{-s}`.
    pub s: f64,
    pub delta: Option<f64>,
    pub beta: Option<f64>,
}

impl ExperimentConfig {
    /// Fills the norm exponents the kind leaves implicit.
    pub fn resolved_norms(&self) -> ResolvedNorms {
        let n = self.norms;
        match self.kind {
            ExperimentKind::LlnTransport => {
                let delta = n.delta.unwrap_or(1.0);
                ResolvedNorms {
                    s: delta,
                    delta: Some(delta),
                    beta: None,
                }
            }
            ExperimentKind::CltTransport => {
                let delta = n.delta.unwrap_or(0.35);
                ResolvedNorms {
                    s: n.s.unwrap_or(1.0 + delta + 0.05),
                    delta: Some(delta),
                    beta: None,
                }
            }
            ExperimentKind::LlnEuler => ResolvedNorms {
                s: n.s.unwrap_or(1.0),
                delta: None,
                beta: None,
            },
            ExperimentKind::CltEuler => match n.beta {
                Some(beta) => ResolvedNorms {
                    s: 1.0 - beta,
                    delta: None,
                    beta: Some(beta),
                },
                None => ResolvedNorms {
                    s: 1.0,
                    delta: None,
                    beta: None,
                },
            },
            ExperimentKind::LdpMinimize => ResolvedNorms {
                s: n.delta.unwrap_or(0.0),
                delta: Some(n.delta.unwrap_or(0.0)),
                beta: None,
            },
            ExperimentKind::LdpTail => {
                let delta = n.delta.unwrap_or(1.5);
                ResolvedNorms {
                    s: delta,
                    delta: Some(delta),
                    beta: None,
                }
            }
            ExperimentKind::DualChecks | ExperimentKind::NoiseChecks => ResolvedNorms {
                s: 0.0,
                delta: None,
                beta: None,
            },
        }
    }

    /// Every violated constraint, each naming the field, the constraint and
    /// the result it protects.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let kind = self.kind;
        let grid_ok = self.grid >= 8 && self.grid % 2 == 0;
        if !grid_ok {
            v.push(format!("grid: N must be even and >= 8, got {}", self.grid));
        }
        let k_max = self.grid / 3;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("dt: must be positive, got {}", self.dt));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            v.push(format!("t_final: must be positive, got {}", self.t_final));
        } else if self.dt > 0.0 && self.dt > self.t_final {
            v.push(format!("dt: must not exceed t_final = {}, got {}", self.t_final, self.dt));
        }
        if self.saves == 0 {
            v.push("saves: must be >= 1".to_string());
        }

        if kind.uses_noise() {
            if !(self.alpha > 0.0 && self.alpha < 1.0) {
                v.push(format!(
                    "alpha: must satisfy 0 < alpha < d/2 = 1 (noise covariance trace-class after rescaling), got {}",
                    self.alpha
                ));
            }
            if self.n_list.is_empty() {
                v.push("n_list: must be non-empty".to_string());
            }
            if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
                v.push(format!("n_list: must be strictly increasing, got {:?}", self.n_list));
            }
            for &n in &self.n_list {
                if n == 0 {
                    v.push("n_list: every n must be >= 1".to_string());
                    continue;
                }
                let outer = self.window.outer_radius(n);
                if outer > k_max {
                    let bound = match self.window {
                        Window::LowPass => "n <= floor(N/3)".to_string(),
                        Window::Band => "2n <= floor(N/3)".to_string(),
                    };
                    v.push(format!(
                        "n_list: n = {n} violates {bound} = {k_max} for N = {} (noise modes must survive dealiasing)",
                        self.grid
                    ));
                }
            }
        }
        if kind.is_rate() && self.paths < 2 {
            v.push(format!("paths: must be >= 2 for a Monte Carlo mean, got {}", self.paths));
        }
        if kind == ExperimentKind::LdpTail && self.paths < 100 {
            v.push(format!("paths: must be >= 100 for a tail probability, got {}", self.paths));
        }

        let gamma = self.drift.gamma();
        if !kind.is_euler() && !(0.0..1.0).contains(&gamma) {
            v.push(format!(
                "drift: gamma = 2/q + d/p must satisfy 0 <= gamma < 1 (drift integrability for well-posedness), got {gamma}"
            ));
        }

        let norms = self.resolved_norms();
        match kind {
            ExperimentKind::LlnTransport => {
                let d = norms.delta.unwrap_or(f64::NAN);
                if !(d > 0.0 && d <= 1.0) {
                    v.push(format!(
                        "norms.delta: must satisfy 0 < delta <= d/2 = 1 (law of large numbers rate for the transport equation), got {d}"
                    ));
                }
                if self.norms.s.is_some() {
                    v.push("norms.s: not used by lln_transport; the error norm is H^{-delta}".to_string());
                }
            }
            ExperimentKind::CltTransport => {
                let d = norms.delta.unwrap_or(f64::NAN);
                let cap = self.alpha.min(1.0 - gamma);
                if !(d > 0.0 && d < cap) {
                    v.push(format!(
                        "norms.delta: must satisfy 0 < delta < min(alpha, 1 - gamma) = {cap} (central limit rate for the transport equation), got {d}"
                    ));
                }
                if !(norms.s > 1.0 + d) {
                    v.push(format!(
                        "norms.s: must exceed d/2 + delta = {} (fluctuation error norm of the transport central limit rate), got {}",
                        1.0 + d,
                        norms.s
                    ));
                }
            }
            ExperimentKind::LlnEuler => {
                if !(norms.s >= 0.0) {
                    v.push(format!("norms.s: must be >= 0, got {}", norms.s));
                }
            }
            ExperimentKind::CltEuler => {
                if let Some(b) = norms.beta {
                    if !(b > 0.0 && b < self.alpha) {
                        v.push(format!(
                            "norms.beta: must lie in the open interval (0, alpha) = (0, {}) (regularity of the stochastic convolution), got {b}",
                            self.alpha
                        ));
                    }
                }
                if self.norms.s.is_some() {
                    v.push("norms.s: not used by clt_euler; the error norm is H^{beta-1} (H^{-1} without beta)".to_string());
                }
            }
            ExperimentKind::LdpMinimize => {
                let d = norms.delta.unwrap_or(f64::NAN);
                if !(d >= 0.0) {
                    v.push(format!("norms.delta: penalty exponent must be >= 0, got {d}"));
                }
                let o = &self.ldp;
                if !(o.lambda > 0.0) {
                    v.push(format!("ldp.lambda: must be positive, got {}", o.lambda));
                }
                if o.iterations == 0 {
                    v.push("ldp.iterations: must be >= 1".to_string());
                }
                if !(o.control_radius >= 1.0 && o.control_radius <= k_max as f64) {
                    v.push(format!(
                        "ldp.control_radius: must satisfy 1 <= radius <= floor(N/3) = {k_max}, got {}",
                        o.control_radius
                    ));
                }
                if !(o.plant_scale > 0.0) {
                    v.push(format!("ldp.plant_scale: must be positive, got {}", o.plant_scale));
                }
                if !(self.alpha > 0.0 && self.alpha < 1.0) {
                    v.push(format!(
                        "alpha: must satisfy 0 < alpha < d/2 = 1 (control cost in H^alpha), got {}",
                        self.alpha
                    ));
                }
            }
            ExperimentKind::LdpTail => {
                let d = norms.delta.unwrap_or(f64::NAN);
                if !(d > 1.0) {
                    v.push(format!(
                        "norms.delta: must exceed d/2 = 1 (exponential tail bound for the deviation), got {d}"
                    ));
                }
                match self.ldp.tail_radius {
                    None => v.push("ldp.tail_radius: required for ldp_tail".to_string()),
                    Some(r) if !(r > 0.0) => v.push(format!("ldp.tail_radius: must be positive, got {r}")),
                    _ => {}
                }
            }
            ExperimentKind::DualChecks | ExperimentKind::NoiseChecks => {}
        }

        match &self.initial {
            InitialSpec::TaylorGreen => {}
            InitialSpec::RandomBand { k_lo, k_hi, .. } => {
                if !(*k_lo >= 1 && k_lo <= k_hi && *k_hi <= k_max) {
                    v.push(format!(
                        "initial: random_band needs 1 <= k_lo <= k_hi <= floor(N/3) = {k_max}, got k_lo = {k_lo}, k_hi = {k_hi}"
                    ));
                }
            }
            InitialSpec::File { path } => {
                let p = self.resolve(path);
                if !p.is_file() {
                    v.push(format!("initial: file {} does not exist", p.display()));
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if path.is_relative() => base.join(path),
            _ => path.to_path_buf(),
        }
    }

    pub fn torus(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid)
    }

    /// Builds the initial field; Euler kinds require zero mean.
    pub fn initial_field(&self) -> Result<SpectralField> {
        let grid = self.torus()?;
        let f = match &self.initial {
            InitialSpec::TaylorGreen => taylor_green(grid),
            InitialSpec::RandomBand { k_lo, k_hi, seed } => random_band(grid, *k_lo, *k_hi, *seed)?,
            InitialSpec::File { path } => read_modes_csv(grid, &self.resolve(path))?,
        };
        if self.kind.is_euler() {
            f.require_zero_mean(1e-12)?;
        }
        Ok(f)
    }
}

/// Parses and fully validates a JSON experiment document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(vec![format!("schema: {e}")]))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file; relative paths inside resolve against its directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Config(vec![format!("schema: {e}")]))?;
    let cfg = ExperimentConfig {
        base_dir: path.parent().map(Path::to_path_buf),
        ..cfg
    };
    cfg.validate()?;
    Ok(cfg)
}

fn random_band(grid: TorusGrid, k_lo: usize, k_hi: usize, seed: u64) -> Result<SpectralField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = ((k_lo * k_lo) as i64, (k_hi * k_hi) as i64);
    let r = k_hi as i64;
    let mut modes = Vec::new();
    for k1 in 0..=r {
        for k2 in -r..=r {
            let q = k1 * k1 + k2 * k2;
            if (k1 > 0 || k2 > 0) && q >= lo && q <= hi {
                let c = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
                modes.push(((k1, k2), c));
                modes.push(((-k1, -k2), c.conj()));
            }
        }
    }
    let f = SpectralField::from_modes(grid, &modes)?;
    let norm = f.l2_norm();
    Ok(f.scaled(1.0 / norm))
}

#[derive(Debug, Deserialize)]
struct ModeRow {
    k1: i64,
    k2: i64,
    re: f64,
    im: f64,
}

/// Fourier coefficients from a `k1,k2,re,im` CSV; conjugate partners are
/// filled in when absent.
pub fn read_modes_csv(grid: TorusGrid, path: &Path) -> Result<SpectralField> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<ModeRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut listed = vec![false; grid.len()];
    let index = |k1: i64, k2: i64| {
        grid.index(k1, k2).ok_or_else(|| {
            Error::Config(vec![format!("initial: mode ({k1},{k2}) in {} is not representable", path.display())])
        })
    };
    for row in &rows {
        let i = index(row.k1, row.k2)?;
        coeffs[i] = Complex64::new(row.re, row.im);
        listed[i] = true;
    }
    for row in &rows {
        let j = index(-row.k1, -row.k2)?;
        if !listed[j] {
            coeffs[j] = Complex64::new(row.re, -row.im);
        }
    }
    let f = SpectralField::from_coeffs(grid, coeffs)?;
    if f.hermitian_defect() > 1e-12 {
        return Err(Error::Config(vec![format!(
            "initial: {} is not the spectrum of a real field (k and -k must be conjugate)",
            path.display()
        )]));
    }
    Ok(f)
}
