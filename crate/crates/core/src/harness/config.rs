//! Experiment configuration: the JSON file format and its validation.
//!
//! [`ExperimentConfig`] mirrors the file one-to-one and is what gets echoed
//! into result summaries. [`ExperimentConfig::build`] checks every field
//! and produces the typed [`Experiment`].

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::bayesopt::{default_sup_p, DesignConfig, ObjectiveWeights, UcbMode, UcbSchedule};
use crate::calibration::{Bounds, CalibrationSettings};
use crate::error::{Error, Result};
use crate::geom::{Pose, Se3Metric, UnitQuaternion};
use crate::kernels::{ProductKernelParams, S3KernelParams, SeKernelParams, DEFAULT_TRUNCATION};
use crate::kinematics::{DhChain, DhJoint, JointKind, JointLimits, ParamKind, ParamVector};

use super::rig::NoiseModel;

/// Shipped 7-joint scenario.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../../configs/wam7.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub chain: ChainSpec,
    #[serde(default)]
    pub injected_errors: ErrorSpec,
    #[serde(default)]
    pub weights: WeightsSpec,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(default)]
    pub gp: GpSpec,
    #[serde(default)]
    pub ucb: UcbSpec,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub interleaved: bool,
    #[serde(default)]
    pub calibration: CalibrationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub joints: Vec<JointSpec>,
    #[serde(default)]
    pub base: PoseSpec,
    #[serde(default)]
    pub tool: PoseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    #[serde(default)]
    pub kind: JointKindSpec,
    #[serde(default)]
    pub phi: f64,
    pub alpha: f64,
    pub a: f64,
    pub d: f64,
    pub limits: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKindSpec {
    #[default]
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseSpec {
    /// `[w, x, y, z]`
    pub q: [f64; 4],
    pub p: [f64; 3],
}

impl Default for PoseSpec {
    fn default() -> Self {
        Self {
            q: [1.0, 0.0, 0.0, 0.0],
            p: [0.0; 3],
        }
    }
}

/// Per-joint DH errors applied to the simulated arm. Empty means zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorSpec {
    #[serde(default)]
    pub phi: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub a: Vec<f64>,
    #[serde(default)]
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsSpec {
    /// Position and rotation weights of the objective.
    #[serde(default = "default_halves")]
    pub alpha: [f64; 2],
    /// Position and rotation weights of the SE(3) metric.
    #[serde(default = "default_gamma")]
    pub gamma: [f64; 2],
    /// Defaults to the chain's reach diameter.
    #[serde(default)]
    pub sup_p: Option<f64>,
    #[serde(default = "default_sup_q")]
    pub sup_q: f64,
}

impl Default for WeightsSpec {
    fn default() -> Self {
        Self {
            alpha: default_halves(),
            gamma: default_gamma(),
            sup_p: None,
            sup_q: default_sup_q(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_one")]
    pub sigma: f64,
    #[serde(default = "default_truncation")]
    pub truncation: usize,
    /// Position length scale in meters.
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_one")]
    pub sigma_f: f64,
    #[serde(default = "default_one")]
    pub sigma_s: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kappa: default_kappa(),
            sigma: 1.0,
            truncation: DEFAULT_TRUNCATION,
            beta: default_beta(),
            sigma_f: 1.0,
            sigma_s: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpSpec {
    #[serde(default = "default_gp_noise")]
    pub noise: f64,
    #[serde(default)]
    pub prior_mean: f64,
}

impl Default for GpSpec {
    fn default() -> Self {
        Self {
            noise: default_gp_noise(),
            prior_mean: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UcbSpec {
    #[serde(default = "default_mode")]
    pub mode: UcbMode,
    #[serde(default = "default_ucb_beta")]
    pub beta: f64,
    #[serde(default = "default_delta")]
    pub delta: f64,
}

impl Default for UcbSpec {
    fn default() -> Self {
        Self {
            mode: UcbMode::Fixed,
            beta: default_ucb_beta(),
            delta: default_delta(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    /// Half-width for φ and α corrections, radians.
    #[serde(default = "default_angle_bound")]
    pub angle: f64,
    /// Half-width for a and d corrections, meters.
    #[serde(default = "default_length_bound")]
    pub length: f64,
}

impl Default for BoundsSpec {
    fn default() -> Self {
        Self {
            angle: default_angle_bound(),
            length: default_length_bound(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Meters.
    #[serde(default = "default_pos_noise")]
    pub pos: f64,
    /// Radians.
    #[serde(default = "default_rot_noise")]
    pub rot: f64,
    /// Radians.
    #[serde(default)]
    pub joint: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            pos: default_pos_noise(),
            rot: default_rot_noise(),
            joint: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationSpec {
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Random configurations used to find dependent columns.
    #[serde(default = "default_probes")]
    pub probe_configurations: usize,
}

impl Default for CalibrationSpec {
    fn default() -> Self {
        Self {
            max_iters: default_max_iters(),
            tol: default_tol(),
            probe_configurations: default_probes(),
        }
    }
}

fn default_candidates() -> usize {
    2000
}
fn default_iterations() -> usize {
    20
}
fn default_true() -> bool {
    true
}
fn default_halves() -> [f64; 2] {
    [0.5, 0.5]
}
fn default_gamma() -> [f64; 2] {
    [0.1, 0.9]
}
fn default_sup_q() -> f64 {
    PI
}
fn default_kappa() -> f64 {
    0.5
}
fn default_one() -> f64 {
    1.0
}
fn default_truncation() -> usize {
    DEFAULT_TRUNCATION
}
fn default_beta() -> f64 {
    0.2
}
fn default_gp_noise() -> f64 {
    1e-3
}
fn default_mode() -> UcbMode {
    UcbMode::Fixed
}
fn default_ucb_beta() -> f64 {
    4.0
}
fn default_delta() -> f64 {
    0.1
}
fn default_angle_bound() -> f64 {
    2.0
}
fn default_length_bound() -> f64 {
    0.3
}
fn default_pos_noise() -> f64 {
    5e-4
}
fn default_rot_noise() -> f64 {
    0.1f64.to_radians()
}
fn default_max_iters() -> usize {
    20
}
fn default_tol() -> f64 {
    1e-10
}
fn default_probes() -> usize {
    64
}

/// Validated, typed experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub chain: DhChain,
    pub nominal: ParamVector,
    pub injected: ParamVector,
    pub design: DesignConfig,
    pub bounds: Bounds,
    pub noise: NoiseModel,
    pub metric: Se3Metric,
    pub calibration: CalibrationSettings,
    pub probe_configurations: usize,
    pub interleaved: bool,
}

impl Experiment {
    pub fn truth(&self) -> ParamVector {
        self.nominal.add(&self.injected)
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn shipped_default() -> Self {
        Self::from_json(DEFAULT_CONFIG_JSON).expect("shipped config parses")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Validates every field and assembles the typed experiment.
    pub fn build(&self) -> Result<Experiment> {
        let chain = self.build_chain()?;
        let n = chain.n_joints();
        let nominal = chain.params();
        let injected = self.build_injected(n)?;

        let [a1, a2] = self.weights.alpha;
        if !(a1 > 0.0 && a2 > 0.0) || (a1 + a2 - 1.0).abs() > 1e-12 {
            return Err(Error::config(
                "weights.alpha",
                format!("weights must be positive and sum to 1, got [{a1}, {a2}]"),
            ));
        }
        let sup_p = match self.weights.sup_p {
            Some(v) if !(v > 0.0 && v.is_finite()) => {
                return Err(Error::config("weights.sup_p", format!("must be positive, got {v}")))
            }
            Some(v) => v,
            None => default_sup_p(&chain),
        };
        if !(self.weights.sup_q > 0.0 && self.weights.sup_q <= PI) {
            return Err(Error::config("weights.sup_q", format!("must lie in (0, π], got {}", self.weights.sup_q)));
        }
        let weights = ObjectiveWeights::new(a1, a2, sup_p, self.weights.sup_q).map_err(|e| field("weights", e))?;
        let [g1, g2] = self.weights.gamma;
        let metric = Se3Metric::new(g1, g2).map_err(|e| field("weights.gamma", e))?;

        let k = &self.kernel;
        let s3 = S3KernelParams::new(k.kappa, k.sigma, k.truncation).map_err(|e| kernel_field(k, e))?;
        let se = SeKernelParams::new(k.beta, k.sigma_f, 0.0).map_err(|e| kernel_field(k, e))?;
        let kernel = ProductKernelParams::new(s3, se, k.sigma_s).map_err(|e| field("kernel.sigma_s", e))?;

        if !(self.gp.noise >= 0.0 && self.gp.noise.is_finite()) {
            return Err(Error::config("gp.noise", format!("must be nonnegative, got {}", self.gp.noise)));
        }
        if !self.gp.prior_mean.is_finite() {
            return Err(Error::config("gp.prior_mean", "must be finite"));
        }
        if self.candidates == 0 {
            return Err(Error::config("candidates", "must be at least 1"));
        }
        let ucb = UcbSchedule::new(self.ucb.mode, self.ucb.beta, self.ucb.delta, self.candidates).map_err(|e| {
            let name = if !(self.ucb.beta > 0.0) { "ucb.beta" } else { "ucb.delta" };
            field(name, e)
        })?;
        if self.iterations == 0 {
            return Err(Error::config("iterations", "must be at least 1"));
        }
        for (name, v) in [("bounds.angle", self.bounds.angle), ("bounds.length", self.bounds.length)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, format!("must be nonnegative, got {v}")));
            }
        }
        let bounds = Bounds::symmetric(n, self.bounds.angle, self.bounds.length)?;
        let noise = NoiseModel::new(self.noise.pos, self.noise.rot, self.noise.joint).map_err(|e| field("noise", e))?;
        if self.calibration.max_iters == 0 {
            return Err(Error::config("calibration.max_iters", "must be at least 1"));
        }
        if !(self.calibration.tol > 0.0) {
            return Err(Error::config("calibration.tol", "must be positive"));
        }
        let min_probes = (4 * n).div_ceil(7);
        if self.calibration.probe_configurations < min_probes {
            return Err(Error::config(
                "calibration.probe_configurations",
                format!("needs at least {min_probes} configurations for {n} joints"),
            ));
        }
        let calibration = CalibrationSettings {
            max_iters: self.calibration.max_iters,
            tol: self.calibration.tol,
        };

        let design = DesignConfig {
            weights,
            kernel,
            noise_scale: self.gp.noise,
            prior_mean: self.gp.prior_mean,
            ucb,
            iterations: self.iterations,
            seed: self.seed,
            interleave: None,
        };
        Ok(Experiment {
            chain,
            nominal,
            injected,
            design,
            bounds,
            noise,
            metric,
            calibration,
            probe_configurations: self.calibration.probe_configurations,
            interleaved: self.interleaved,
        })
    }

    fn build_chain(&self) -> Result<DhChain> {
        if self.chain.joints.is_empty() {
            return Err(Error::config("chain.joints", "at least one joint is required"));
        }
        let joints = self
            .chain
            .joints
            .iter()
            .enumerate()
            .map(|(i, j)| {
                let path = format!("chain.joints[{i}]");
                let limits = JointLimits::new(j.limits[0], j.limits[1]).map_err(|e| field(format!("{path}.limits"), e))?;
                let kind = match j.kind {
                    JointKindSpec::Revolute => JointKind::Revolute,
                    JointKindSpec::Prismatic => JointKind::Prismatic,
                };
                DhJoint::new(kind, j.phi, j.alpha, j.a, j.d, limits).map_err(|e| field(path, e))
            })
            .collect::<Result<Vec<_>>>()?;
        let base = pose(&self.chain.base, "chain.base")?;
        let tool = pose(&self.chain.tool, "chain.tool")?;
        DhChain::new(joints, base, tool).map_err(|e| field("chain", e))
    }

    fn build_injected(&self, n: usize) -> Result<ParamVector> {
        let mut out = ParamVector::zeros(n);
        let e = &self.injected_errors;
        for (kind, values) in [
            (ParamKind::Phi, &e.phi),
            (ParamKind::Alpha, &e.alpha),
            (ParamKind::A, &e.a),
            (ParamKind::D, &e.d),
        ] {
            let path = format!("injected_errors.{}", kind.name());
            if !values.is_empty() && values.len() != n {
                return Err(Error::config(path, format!("expected {n} entries, got {}", values.len())));
            }
            for (j, v) in values.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::config(format!("{path}[{j}]"), "must be finite"));
                }
                out.set(kind, j, *v);
            }
        }
        Ok(out)
    }
}

fn pose(spec: &PoseSpec, path: &str) -> Result<Pose> {
    let q = UnitQuaternion::from_array(spec.q).map_err(|e| field(format!("{path}.q"), e))?;
    if spec.p.iter().any(|v| !v.is_finite()) {
        return Err(Error::config(format!("{path}.p"), "must be finite"));
    }
    Ok(Pose::new(q, Vector3::from(spec.p)))
}

fn field(path: impl Into<String>, e: Error) -> Error {
    let message = match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    };
    Error::config(path, message)
}

fn kernel_field(k: &KernelSpec, e: Error) -> Error {
    let name = if !(k.kappa > 0.0) {
        "kernel.kappa"
    } else if !(k.sigma > 0.0) {
        "kernel.sigma"
    } else if k.truncation == 0 {
        "kernel.truncation"
    } else if !(k.beta > 0.0) {
        "kernel.beta"
    } else {
        "kernel.sigma_f"
    };
    field(name, e)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Json(j) => Error::config(path.display().to_string(), j.to_string()),
        other => other,
    })
}
