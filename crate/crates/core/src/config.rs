//! Run configuration: a TOML document with the sections `mesh`, `physics`,
//! `parameterization`, `network`, `loss`, `training`, `optimizer` and `io`.
//!
//! Unknown keys are errors. Missing required keys are collected and reported
//! together. [`RunConfig::to_toml`] writes every key, defaults included, and
//! parsing that output gives back the same configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{FolError, Result};
use crate::losses::{BcMode, LossWeights, PhysicsLoss};
use crate::nn::{Activation, MlpConfig};
use crate::optim::OptimOptions;
use crate::param::{FourierBasis, ProjectionSpec};
use crate::training::TrainConfig;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "FOL_OUT_DIR";

/// Keys without a default, as `section.key`.
pub const REQUIRED_KEYS: &[&str] = &[
    "mesh.n",
    "physics.kind",
    "parameterization.kind",
    "network.hidden",
    "network.activation",
    "training.epochs",
    "training.lr",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub physics: PhysicsSection,
    pub parameterization: ParamSection,
    pub network: NetworkSection,
    #[serde(default)]
    pub loss: LossSection,
    pub training: TrainingSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    /// Nodes per side of the unit square.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhysicsKind {
    Thermal,
    Nonlinear,
    Elastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub kind: PhysicsKind,
    #[serde(default = "d_t_left")]
    pub t_left: f64,
    #[serde(default = "d_t_right")]
    pub t_right: f64,
    /// Uniform heat source, used when the design is not the source.
    #[serde(default)]
    pub source: f64,
    /// `k = k_h (m1 + beta T^m2)` for `kind = "nonlinear"`.
    #[serde(default = "d_m1")]
    pub m1: f64,
    #[serde(default = "d_m2")]
    pub m2: f64,
    #[serde(default = "d_one")]
    pub beta: f64,
    #[serde(default = "d_nu")]
    pub nu: f64,
    #[serde(default = "d_one")]
    pub modulus: f64,
    /// Prescribed top-edge displacement for elastic solves.
    #[serde(default = "d_top")]
    pub top_displacement: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    /// Fourier coefficients of the conductivity.
    Fourier,
    /// Fourier coefficients of the heat source, conductivity fixed.
    Source,
    /// Ellipse-inclusion microstructures on nodal conductivity.
    Ellipse,
    /// Top-edge displacement of the elastic block.
    Bc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSection {
    pub kind: ParamKind,
    #[serde(default = "d_fx")]
    pub fx: Vec<f64>,
    #[serde(default = "d_fy")]
    pub fy: Vec<f64>,
    #[serde(default = "d_vmin")]
    pub vmin: f64,
    #[serde(default = "d_one")]
    pub vmax: f64,
    #[serde(default = "d_proj_beta")]
    pub beta: f64,
    /// Training corpus size.
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_test_samples")]
    pub test_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Sampling range of the mean coefficient `c0`.
    #[serde(default = "d_c0_range")]
    pub c0_range: [f64; 2],
    /// Sampling range of every other coefficient.
    #[serde(default = "d_coeff_range")]
    pub coeff_range: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "d_one")]
    pub w_ph: f64,
    #[serde(default)]
    pub w_bc: f64,
    #[serde(default)]
    pub w_se: f64,
    #[serde(default = "d_w_db")]
    pub w_db: f64,
    #[serde(default = "d_physics")]
    pub physics: PhysicsLoss,
    #[serde(default = "d_bc_mode")]
    pub bc_mode: BcMode,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection {
            w_ph: 1.0,
            w_bc: 0.0,
            w_se: 0.0,
            w_db: 10.0,
            physics: PhysicsLoss::Energy,
            bc_mode: BcMode::Hard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimMode {
    Fem,
    Fol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "d_iterations")]
    pub iterations: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_tol")]
    pub active_tol: f64,
    #[serde(default = "d_tol")]
    pub step_tol: f64,
    #[serde(default = "d_mode")]
    pub mode: OptimMode,
    /// Uniform starting value of the design field (sets `c0`).
    #[serde(default = "d_start")]
    pub start: f64,
    /// Training epochs per design iteration in FOL mode.
    #[serde(default = "d_epochs_per_iter")]
    pub epochs_per_iter: usize,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        let o = OptimOptions::default();
        OptimizerSection {
            iterations: o.iterations,
            alpha: o.alpha,
            active_tol: o.active_tol,
            step_tol: o.step_tol,
            mode: OptimMode::Fem,
            start: 0.5,
            epochs_per_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    /// Empty means: `$FOL_OUT_DIR`, else `out`.
    #[serde(default)]
    pub out_dir: String,
    /// Nodes per side of upsampled exports.
    #[serde(default = "d_export")]
    pub export_resolution: usize,
}

impl Default for IoSection {
    fn default() -> Self {
        IoSection {
            out_dir: String::new(),
            export_resolution: 165,
        }
    }
}

fn d_t_left() -> f64 {
    1.0
}
fn d_t_right() -> f64 {
    0.1
}
fn d_m1() -> f64 {
    2.0
}
fn d_m2() -> f64 {
    4.0
}
fn d_one() -> f64 {
    1.0
}
fn d_nu() -> f64 {
    0.3
}
fn d_top() -> [f64; 2] {
    [0.0, 0.1]
}
fn d_fx() -> Vec<f64> {
    vec![5.0, 7.0, 9.0]
}
fn d_fy() -> Vec<f64> {
    vec![4.0, 6.0, 8.0]
}
fn d_vmin() -> f64 {
    0.01
}
fn d_proj_beta() -> f64 {
    5.0
}
fn d_samples() -> usize {
    500
}
fn d_test_samples() -> usize {
    20
}
fn d_c0_range() -> [f64; 2] {
    [0.0, 1.0]
}
fn d_coeff_range() -> [f64; 2] {
    [-1.0, 1.0]
}
fn d_w_db() -> f64 {
    10.0
}
fn d_physics() -> PhysicsLoss {
    PhysicsLoss::Energy
}
fn d_bc_mode() -> BcMode {
    BcMode::Hard
}
fn d_batch() -> usize {
    50
}
fn d_iterations() -> usize {
    OptimOptions::default().iterations
}
fn d_alpha() -> f64 {
    OptimOptions::default().alpha
}
fn d_tol() -> f64 {
    1e-6
}
fn d_mode() -> OptimMode {
    OptimMode::Fem
}
fn d_start() -> f64 {
    0.5
}
fn d_epochs_per_iter() -> usize {
    200
}
fn d_export() -> usize {
    165
}

fn missing_keys(doc: &toml::Table) -> Vec<&'static str> {
    REQUIRED_KEYS
        .iter()
        .copied()
        .filter(|key| {
            let (sec, k) = key.split_once('.').expect("section.key");
            !doc.get(sec).and_then(|s| s.as_table()).is_some_and(|t| t.contains_key(k))
        })
        .collect()
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| FolError::Config(e.to_string()))?;
        let missing = missing_keys(&doc);
        if !missing.is_empty() {
            return Err(FolError::Config(format!("missing required keys: {}", missing.join(", "))));
        }
        let cfg: RunConfig = toml::from_str(text).map_err(|e| FolError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            FolError::Config(m) => FolError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Every key, defaults included.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FolError::Config(m));
        if self.mesh.n < 2 {
            return bad(format!("mesh.n must be at least 2, got {}", self.mesh.n));
        }
        if self.network.hidden.iter().any(|&h| h == 0) {
            return bad("network.hidden entries must be positive".into());
        }
        if self.training.batch_size == 0 {
            return bad("training.batch_size must be positive".into());
        }
        if !(self.training.lr > 0.0) {
            return bad("training.lr must be positive".into());
        }
        let p = &self.parameterization;
        if matches!(p.kind, ParamKind::Fourier | ParamKind::Source) {
            self.fourier_basis()?;
            ProjectionSpec::new(p.vmin, p.vmax, p.beta).map_err(|e| FolError::Config(e.to_string()))?;
        }
        for (name, r) in [("c0_range", p.c0_range), ("coeff_range", p.coeff_range)] {
            if !(r[0] <= r[1]) {
                return bad(format!("parameterization.{name} must satisfy lo <= hi"));
            }
        }
        self.loss_weights().validate().map_err(|e| FolError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn fourier_basis(&self) -> Result<FourierBasis> {
        let p = &self.parameterization;
        FourierBasis::cos_cos(&p.fx, &p.fy).map_err(|e| FolError::Config(e.to_string()))
    }

    pub fn projection(&self) -> Result<ProjectionSpec> {
        let p = &self.parameterization;
        ProjectionSpec::new(p.vmin, p.vmax, p.beta)
    }

    /// Per-coefficient sampling ranges for a design of dimension `dim`.
    pub fn coefficient_ranges(&self, dim: usize) -> Vec<(f64, f64)> {
        let p = &self.parameterization;
        (0..dim)
            .map(|j| {
                let r = if j == 0 { p.c0_range } else { p.coeff_range };
                (r[0], r[1])
            })
            .collect()
    }

    pub fn loss_weights(&self) -> LossWeights {
        let l = &self.loss;
        LossWeights {
            w_ph: l.w_ph,
            w_bc: l.w_bc,
            w_se: l.w_se,
            w_db: l.w_db,
            physics: l.physics,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.training.epochs,
            batch_size: self.training.batch_size,
            lr: self.training.lr,
            seed: self.training.seed,
            bc_mode: self.loss.bc_mode,
        }
    }

    pub fn mlp_config(&self, input: usize, output: usize) -> MlpConfig {
        MlpConfig {
            input,
            hidden: self.network.hidden.clone(),
            output,
            activation: self.network.activation,
            seed: self.network.seed,
        }
    }

    pub fn optim_options(&self) -> OptimOptions {
        let o = &self.optimizer;
        OptimOptions {
            iterations: o.iterations,
            alpha: o.alpha,
            active_tol: o.active_tol,
            step_tol: o.step_tol,
        }
    }

    /// `io.out_dir`, else [`RunConfig::default_out_dir`].
    pub fn out_dir(&self) -> std::path::PathBuf {
        if !self.io.out_dir.is_empty() {
            return self.io.out_dir.clone().into();
        }
        Self::default_out_dir()
    }

    /// `$FOL_OUT_DIR`, else `out`.
    pub fn default_out_dir() -> std::path::PathBuf {
        std::env::var_os(OUT_DIR_ENV).map_or_else(|| "out".into(), Into::into)
    }
}
