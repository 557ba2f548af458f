//! GP-UCB experimental design over reachable poses.
//!
//! Each iteration scores a fresh seeded set of reachable candidates by
//! `μ(x) + √β_k σ(x)`, commands the best one on a [`MeasurementRig`],
//! scores the measurement against the model's prediction, and folds the
//! score back into the GP. With interleaved calibration the predicted
//! poses use the latest DH estimate.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{calibrate, Bounds, CalibrationProblem, CalibrationSettings, Measurement};
use crate::error::{Error, Result};
use crate::geom::{geodesic_distance_s3, Pose};
use crate::gp::GpModel;
use crate::kernels::ProductKernelParams;
use crate::kinematics::{forward_kinematics, ColumnMask, DhChain, JointVector, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveWeights {
    alpha_pos: f64,
    alpha_rot: f64,
    sup_p: f64,
    sup_q: f64,
}

impl ObjectiveWeights {
    pub fn new(alpha_pos: f64, alpha_rot: f64, sup_p: f64, sup_q: f64) -> Result<Self> {
        if !(alpha_pos > 0.0 && alpha_rot > 0.0) || ((alpha_pos + alpha_rot) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "objective weights must be positive and sum to 1, got {alpha_pos} + {alpha_rot}"
            )));
        }
        if !(sup_p > 0.0 && sup_p.is_finite()) {
            return Err(Error::invalid(format!("sup_p must be positive, got {sup_p}")));
        }
        if !(sup_q > 0.0 && sup_q <= PI) {
            return Err(Error::invalid(format!("sup_q must lie in (0, π], got {sup_q}")));
        }
        Ok(Self {
            alpha_pos,
            alpha_rot,
            sup_p,
            sup_q,
        })
    }

    /// Equal weights, `sup_p` from the chain's reach diameter and `sup_q = π`.
    pub fn for_chain(chain: &DhChain) -> Result<Self> {
        Self::new(0.5, 0.5, default_sup_p(chain), PI)
    }

    pub fn alpha_pos(&self) -> f64 {
        self.alpha_pos
    }

    pub fn alpha_rot(&self) -> f64 {
        self.alpha_rot
    }

    pub fn sup_p(&self) -> f64 {
        self.sup_p
    }

    pub fn sup_q(&self) -> f64 {
        self.sup_q
    }
}

/// `2 Σ (|a_i| + |d_i|)`, floored so that a degenerate chain still
/// normalizes.
pub fn default_sup_p(chain: &DhChain) -> f64 {
    (2.0 * chain.reach()).max(1e-3)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveValue {
    pub f: f64,
    /// Position error in meters.
    pub f_p: f64,
    /// Rotation error in radians.
    pub f_q: f64,
    /// A normalized term exceeded 1 and was saturated.
    pub clipped: bool,
}

pub fn objective(measured: &Pose, computed: &Pose, w: &ObjectiveWeights) -> ObjectiveValue {
    let f_p = (measured.p - computed.p).norm();
    let f_q = geodesic_distance_s3(&measured.q, &computed.q);
    let np = f_p / w.sup_p;
    let nq = f_q / w.sup_q;
    let clipped = np > 1.0 || nq > 1.0;
    let f = -(w.alpha_pos * np.min(1.0) + w.alpha_rot * nq.min(1.0));
    ObjectiveValue {
        // `+ 0.0` turns the -0 of exact agreement into 0.
        f: f.clamp(-1.0, 0.0) + 0.0,
        f_p,
        f_q,
        clipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UcbMode {
    Fixed,
    Srinivas,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UcbSchedule {
    pub mode: UcbMode,
    pub beta_fixed: f64,
    pub delta_conf: f64,
    pub candidate_count: usize,
}

impl UcbSchedule {
    pub fn new(mode: UcbMode, beta_fixed: f64, delta_conf: f64, candidate_count: usize) -> Result<Self> {
        if !(beta_fixed > 0.0 && beta_fixed.is_finite()) {
            return Err(Error::invalid(format!("beta_fixed must be positive, got {beta_fixed}")));
        }
        if !(delta_conf > 0.0 && delta_conf < 1.0) {
            return Err(Error::invalid(format!("delta_conf must lie in (0, 1), got {delta_conf}")));
        }
        if candidate_count == 0 {
            return Err(Error::invalid("candidate_count must be at least 1"));
        }
        Ok(Self {
            mode,
            beta_fixed,
            delta_conf,
            candidate_count,
        })
    }

    /// Exploration weight at iteration `k` (1-based).
    pub fn beta(&self, k: usize) -> f64 {
        match self.mode {
            UcbMode::Fixed => self.beta_fixed,
            UcbMode::Srinivas => {
                let k = k.max(1) as f64;
                2.0 * (self.candidate_count as f64 * k * k * PI * PI / (6.0 * self.delta_conf)).ln()
            }
        }
    }
}

impl Default for UcbSchedule {
    fn default() -> Self {
        Self {
            mode: UcbMode::Fixed,
            beta_fixed: 4.0,
            delta_conf: 0.1,
            candidate_count: 2000,
        }
    }
}

pub fn ucb(mean: f64, variance: f64, k: usize, s: &UcbSchedule) -> f64 {
    mean + s.beta(k).sqrt() * variance.max(0.0).sqrt()
}

/// A reachable target together with the joints that reach it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub pose: Pose,
    pub joints: JointVector,
}

/// Uniform joint samples within limits, mapped through FK at `params`.
pub fn generate_candidates(chain: &DhChain, params: &ParamVector, count: usize, seed: u64) -> Result<Vec<Candidate>> {
    if count == 0 {
        return Err(Error::invalid("candidate count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let joints = chain.random_joints(&mut rng);
            let pose = forward_kinematics(chain, params, &joints)?;
            Ok(Candidate { pose, joints })
        })
        .collect()
}

/// Index of the largest UCB score; lowest index on ties.
pub fn select_next(model: &GpModel, candidates: &[Candidate], k: usize, s: &UcbSchedule) -> Result<(usize, f64)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidates to select from"));
    }
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let post = model.posterior(&c.pose);
        let score = ucb(post.mean, post.variance, k, s);
        if score > best.1 {
            best = (i, score);
        }
    }
    Ok(best)
}

/// Port to whatever executes a commanded configuration and reports what
/// was measured.
pub trait MeasurementRig {
    fn command(&mut self, target: &Candidate) -> Result<Measurement>;
}

impl<R: MeasurementRig + ?Sized> MeasurementRig for &mut R {
    fn command(&mut self, target: &Candidate) -> Result<Measurement> {
        (**self).command(target)
    }
}

/// What the loop needs to re-solve the DH correction between iterations.
#[derive(Debug, Clone)]
pub struct Interleave {
    pub bounds: Bounds,
    pub mask: ColumnMask,
    pub settings: CalibrationSettings,
}

#[derive(Debug, Clone)]
pub struct DesignConfig {
    pub weights: ObjectiveWeights,
    pub kernel: ProductKernelParams,
    /// Observation noise σ_ε of the GP.
    pub noise_scale: f64,
    pub prior_mean: f64,
    pub ucb: UcbSchedule,
    pub iterations: usize,
    pub seed: u64,
    pub interleave: Option<Interleave>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRecord {
    /// 1-based.
    pub iteration: usize,
    pub target: Pose,
    pub measured: Pose,
    /// FK of the working parameters at the measured joints.
    pub computed: Pose,
    pub joints: JointVector,
    pub objective: ObjectiveValue,
    pub ucb_value: f64,
    pub gp_mean: f64,
    pub gp_var: f64,
    /// The working parameters were re-solved after this measurement.
    pub recalibrated: bool,
}

#[derive(Debug, Clone)]
pub struct DesignRun {
    pub records: Vec<DesignRecord>,
    pub measurements: Vec<Measurement>,
    /// Working parameters after the last iteration.
    pub params: ParamVector,
    pub model: GpModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Selector {
    Ucb,
    Uniform,
}

/// GP-UCB design loop.
pub fn run_design<R: MeasurementRig>(
    rig: &mut R,
    chain: &DhChain,
    params: &ParamVector,
    cfg: &DesignConfig,
) -> Result<DesignRun> {
    design_loop(rig, chain, params, cfg, Selector::Ucb)
}

/// Same loop with uniform selection among the candidates.
pub fn run_random_baseline<R: MeasurementRig>(
    rig: &mut R,
    chain: &DhChain,
    params: &ParamVector,
    cfg: &DesignConfig,
) -> Result<DesignRun> {
    design_loop(rig, chain, params, cfg, Selector::Uniform)
}

/// Seed for the candidate set of iteration `k`.
pub fn candidate_seed(seed: u64, k: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(k as u64 + 1)
}

fn design_loop<R: MeasurementRig>(
    rig: &mut R,
    chain: &DhChain,
    params: &ParamVector,
    cfg: &DesignConfig,
    selector: Selector,
) -> Result<DesignRun> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("iteration count must be at least 1"));
    }
    if params.len() != chain.n_params() {
        return Err(Error::invalid("parameter vector does not match the chain"));
    }
    let mut model = GpModel::new(cfg.kernel, cfg.noise_scale, cfg.prior_mean)?;
    let mut pick_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut working = params.clone();
    let mut measurements: Vec<Measurement> = Vec::with_capacity(cfg.iterations);
    let mut records = Vec::with_capacity(cfg.iterations);

    for k in 1..=cfg.iterations {
        let candidates = generate_candidates(chain, params, cfg.ucb.candidate_count, candidate_seed(cfg.seed, k))?;
        let (index, ucb_value) = match selector {
            Selector::Ucb => select_next(&model, &candidates, k, &cfg.ucb)?,
            Selector::Uniform => {
                let i = pick_rng.random_range(0..candidates.len());
                let post = model.posterior(&candidates[i].pose);
                (i, ucb(post.mean, post.variance, k, &cfg.ucb))
            }
        };
        let target = &candidates[index];
        let post = model.posterior(&target.pose);

        let m = rig.command(target).map_err(|e| Error::Rig {
            iteration: k,
            source: Box::new(e),
        })?;
        let computed = forward_kinematics(chain, &working, &m.joints)?;
        let value = objective(&m.pose, &computed, &cfg.weights);
        model = model.add_observation(target.pose, value.f)?;
        measurements.push(m.clone());

        let mut recalibrated = false;
        if let Some(il) = &cfg.interleave {
            if let Some(p) = try_recalibrate(chain, params, &measurements, il)? {
                working = p;
                recalibrated = true;
            }
        }
        records.push(DesignRecord {
            iteration: k,
            target: target.pose,
            measured: m.pose,
            computed,
            joints: m.joints,
            objective: value,
            ucb_value,
            gp_mean: post.mean,
            gp_var: post.variance,
            recalibrated,
        });
    }
    Ok(DesignRun {
        records,
        measurements,
        params: working,
        model,
    })
}

/// Re-solves from the nominal parameters with everything measured so far.
/// `None` while the data cannot support the solve yet.
fn try_recalibrate(
    chain: &DhChain,
    nominal: &ParamVector,
    measurements: &[Measurement],
    il: &Interleave,
) -> Result<Option<ParamVector>> {
    if measurements.len() < il.mask.min_measurements() {
        return Ok(None);
    }
    let problem = match CalibrationProblem::new(
        chain.clone(),
        nominal.clone(),
        measurements.to_vec(),
        il.bounds.clone(),
        il.mask.clone(),
    ) {
        Ok(p) => p,
        Err(Error::NotIdentifiable { .. }) | Err(Error::TooFewMeasurements { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    match calibrate(&problem, &il.settings) {
        Ok(out) => Ok(Some(out.params)),
        Err(Error::NonConvergence { .. }) | Err(Error::IllConditioned(_)) => Ok(None),
        Err(e) => Err(e),
    }
}
