//! Run configuration: a single JSON document describing the model, the
//! grids, the numerical knobs and the task list. Unknown keys are rejected
//! so typos surface as schema errors naming the offending key, and every
//! block has sensible defaults so minimal configs stay short.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use kerrgap_core::{CutoffSpec, KrylovOpts, ModelParams};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub sweep: SweepBlock,
    #[serde(default)]
    pub cutoff: CutoffBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    /// Operating point for the single-shot tasks (steady, gap, wigner) and
    /// the drive used by mapcheck.
    #[serde(default)]
    pub point: PointBlock,
    #[serde(default)]
    pub wigner: WignerBlock,
    #[serde(default)]
    pub fit: FitBlock,
    /// Lattice description consumed by the mapcheck task.
    #[serde(default)]
    pub lattice: Option<LatticeBlock>,
    pub tasks: Vec<Task>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Worker threads; 0 means one per logical CPU.
    #[serde(default)]
    pub parallelism: usize,
    /// Seed for the seeded-subset verification (`--check`). Deterministic
    /// computation paths do not consume randomness.
    #[serde(default)]
    pub seed: u64,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub delta: f64,
    pub u_tilde: f64,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub n_list: Vec<f64>,
    pub f_start: f64,
    pub f_stop: f64,
    pub f_points: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self { n_list: vec![1.0, 2.0, 3.0, 5.0], f_start: 0.4, f_stop: 1.3, f_points: 19 }
    }
}

impl SweepBlock {
    pub fn f_grid(&self) -> Vec<f64> {
        if self.f_points <= 1 {
            return vec![self.f_start];
        }
        let step = (self.f_stop - self.f_start) / (self.f_points - 1) as f64;
        (0..self.f_points).map(|i| self.f_start + i as f64 * step).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum CutoffMode {
    Auto,
    Fixed,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffBlock {
    pub mode: CutoffMode,
    pub tail_tol: f64,
    pub obs_tol: f64,
    pub hard_max: usize,
    /// Basis cutoff when `mode` is `fixed`.
    pub fixed: Option<usize>,
}

impl Default for CutoffBlock {
    fn default() -> Self {
        Self { mode: CutoffMode::Auto, tail_tol: 1e-8, obs_tol: 1e-6, hard_max: 160, fixed: None }
    }
}

impl CutoffBlock {
    pub fn to_spec(&self) -> CutoffSpec {
        match self.mode {
            CutoffMode::Auto => CutoffSpec::Auto {
                tail_tol: self.tail_tol,
                obs_tol: self.obs_tol,
                hard_max: self.hard_max,
            },
            CutoffMode::Fixed => CutoffSpec::Fixed(self.fixed.unwrap_or(0)),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    /// Vectorized dimension up to which the gap task diagonalizes densely.
    pub dense_dim_threshold: usize,
    pub krylov_dim: usize,
    pub tolerance: f64,
    pub max_restarts: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let k = KrylovOpts::default();
        Self {
            dense_dim_threshold: kerrgap_core::spectral::DENSE_DIM_THRESHOLD,
            krylov_dim: k.krylov_dim,
            tolerance: k.target_residual,
            max_restarts: k.max_restarts,
        }
    }
}

impl SolverBlock {
    pub fn krylov_opts(&self) -> KrylovOpts {
        KrylovOpts {
            krylov_dim: self.krylov_dim,
            max_restarts: self.max_restarts,
            target_residual: self.tolerance,
            ..KrylovOpts::default()
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointBlock {
    pub f_tilde: f64,
    pub n_scale: f64,
}

impl Default for PointBlock {
    fn default() -> Self {
        Self { f_tilde: 1.0, n_scale: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerBlock {
    /// Half-width of the square grid in rescaled units; derived from the
    /// semiclassical density when absent.
    pub half_width: Option<f64>,
    pub points: usize,
    /// Relative height below which local maxima are not counted as peaks.
    pub rel_threshold: f64,
}

impl Default for WignerBlock {
    fn default() -> Self {
        Self { half_width: None, points: 201, rel_threshold: 0.05 }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitBlock {
    /// Drive bracket handed to the threshold search for every size.
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    /// Log-spaced distances above threshold sampled for the power-law fit.
    pub power_dist_min: f64,
    pub power_dist_max: f64,
    pub power_dist_points: usize,
    /// Smallest N admitted to the 1/N extrapolations.
    pub extrapolate_min_n: f64,
}

impl Default for FitBlock {
    fn default() -> Self {
        Self {
            bracket_lo: 0.75,
            bracket_hi: 1.15,
            power_dist_min: 0.01,
            power_dist_max: 0.45,
            power_dist_points: 16,
            extrapolate_min_n: 6.0,
        }
    }
}

impl FitBlock {
    pub fn power_distances(&self) -> Vec<f64> {
        if self.power_dist_points <= 1 {
            return vec![self.power_dist_min];
        }
        let (a, b) = (self.power_dist_min.ln(), self.power_dist_max.ln());
        (0..self.power_dist_points)
            .map(|i| (a + (b - a) * i as f64 / (self.power_dist_points - 1) as f64).exp())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeBlock {
    pub hopping: f64,
    pub dimension: usize,
    pub n_sites: usize,
    pub detuning: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Steady,
    Gap,
    Sweep,
    Wigner,
    Semiclassical,
    Fit,
    Extrapolate,
    Mapcheck,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Task::Steady => "steady",
            Task::Gap => "gap",
            Task::Sweep => "sweep",
            Task::Wigner => "wigner",
            Task::Semiclassical => "semiclassical",
            Task::Fit => "fit",
            Task::Extrapolate => "extrapolate",
            Task::Mapcheck => "mapcheck",
        };
        f.write_str(s)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural validation beyond what serde can express; the message
    /// names the offending key.
    pub fn validate(&self) -> Result<(), String> {
        let m = &self.model;
        if !(m.gamma > 0.0) || !m.gamma.is_finite() {
            return Err(format!("model.gamma: must be a positive rate, got {}", m.gamma));
        }
        if !m.delta.is_finite() || !m.u_tilde.is_finite() {
            return Err("model.delta / model.u_tilde: must be finite".into());
        }
        if self.sweep.n_list.is_empty() {
            return Err("sweep.n_list: must not be empty".into());
        }
        if self.sweep.n_list.iter().any(|&n| !(n > 0.0)) {
            return Err("sweep.n_list: sizes must be positive".into());
        }
        if self.sweep.f_points == 0 {
            return Err("sweep.f_points: must be at least 1".into());
        }
        if !(self.sweep.f_stop >= self.sweep.f_start) || !(self.sweep.f_start >= 0.0) {
            return Err(format!(
                "sweep.f_start/f_stop: need 0 <= start <= stop, got [{}, {}]",
                self.sweep.f_start, self.sweep.f_stop
            ));
        }
        match self.cutoff.mode {
            CutoffMode::Fixed if self.cutoff.fixed.is_none() => {
                return Err("cutoff.fixed: required when cutoff.mode is \"fixed\"".into());
            }
            CutoffMode::Auto => {
                for (key, v) in
                    [("cutoff.tail_tol", self.cutoff.tail_tol), ("cutoff.obs_tol", self.cutoff.obs_tol)]
                {
                    if !(v > 0.0 && v < 1.0) {
                        return Err(format!("{key}: must lie in (0, 1), got {v}"));
                    }
                }
                if self.cutoff.hard_max < 2 {
                    return Err("cutoff.hard_max: must be at least 2".into());
                }
            }
            _ => {}
        }
        if self.solver.dense_dim_threshold > kerrgap_core::spectral::DENSE_DIM_THRESHOLD {
            return Err(format!(
                "solver.dense_dim_threshold: at most {} (dense diagonalization cap)",
                kerrgap_core::spectral::DENSE_DIM_THRESHOLD
            ));
        }
        if self.solver.krylov_dim < 2 {
            return Err("solver.krylov_dim: must be at least 2".into());
        }
        if !(self.solver.tolerance > 0.0) {
            return Err("solver.tolerance: must be positive".into());
        }
        if !(self.point.f_tilde >= 0.0) || !(self.point.n_scale > 0.0) {
            return Err("point: need f_tilde >= 0 and n_scale > 0".into());
        }
        if self.wigner.points < 9 {
            return Err("wigner.points: grid needs at least 9 points per axis".into());
        }
        if !(self.wigner.rel_threshold > 0.0 && self.wigner.rel_threshold < 1.0) {
            return Err("wigner.rel_threshold: must lie in (0, 1)".into());
        }
        let f = &self.fit;
        if !(f.bracket_hi > f.bracket_lo && f.bracket_lo >= 0.0) {
            return Err(format!(
                "fit.bracket_lo/bracket_hi: need 0 <= lo < hi, got [{}, {}]",
                f.bracket_lo, f.bracket_hi
            ));
        }
        if !(f.power_dist_min > 0.0 && f.power_dist_max >= f.power_dist_min) {
            return Err("fit.power_dist_min/max: need 0 < min <= max".into());
        }
        if f.power_dist_points < 6 {
            return Err("fit.power_dist_points: need at least 6 for a stable power-law window".into());
        }
        if self.tasks.contains(&Task::Mapcheck) && self.lattice.is_none() {
            return Err("lattice: required by the mapcheck task".into());
        }
        if let Some(lat) = &self.lattice {
            if lat.n_sites < 1 || lat.dimension < 1 {
                return Err("lattice.n_sites/dimension: must be at least 1".into());
            }
        }
        Ok(())
    }

    /// Model parameters at an arbitrary operating point.
    pub fn params_at(&self, f_tilde: f64, n_scale: f64) -> Result<ModelParams, String> {
        let p = ModelParams {
            delta: self.model.delta,
            u_tilde: self.model.u_tilde,
            f_tilde,
            gamma: self.model.gamma,
            n_scale,
        };
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }

    /// Model parameters at the configured single-shot point.
    pub fn point_params(&self) -> Result<ModelParams, String> {
        self.params_at(self.point.f_tilde, self.point.n_scale)
    }
}
