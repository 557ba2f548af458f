//! Simulated measurement rig: the true arm plus sensor noise.

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bayesopt::{Candidate, MeasurementRig};
use crate::calibration::Measurement;
use crate::error::{Error, Result};
use crate::geom::UnitQuaternion;
use crate::kinematics::{forward_kinematics, DhChain, JointVector, ParamVector};

/// Standard deviations of the simulated sensors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    /// Isotropic position noise, meters.
    pub pos: f64,
    /// Rotation noise angle, radians.
    pub rot: f64,
    /// Per-joint encoder noise, radians.
    pub joint: f64,
}

impl NoiseModel {
    pub fn new(pos: f64, rot: f64, joint: f64) -> Result<Self> {
        for (name, v) in [("pos", pos), ("rot", rot), ("joint", joint)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("noise scale `{name}` must be nonnegative, got {v}")));
            }
        }
        Ok(Self { pos, rot, joint })
    }

    pub fn none() -> Self {
        Self {
            pos: 0.0,
            rot: 0.0,
            joint: 0.0,
        }
    }
}

impl Default for NoiseModel {
    /// 0.5 mm, 0.1°, exact encoders.
    fn default() -> Self {
        Self {
            pos: 5e-4,
            rot: 0.1f64.to_radians(),
            joint: 0.0,
        }
    }
}

/// Evaluates the true chain at the commanded joints.
#[derive(Debug, Clone)]
pub struct SimRig {
    chain: DhChain,
    truth: ParamVector,
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl SimRig {
    pub fn new(chain: DhChain, truth: ParamVector, noise: NoiseModel, seed: u64) -> Result<Self> {
        if truth.len() != chain.n_params() {
            return Err(Error::invalid("true parameters do not match the chain"));
        }
        Ok(Self {
            chain,
            truth,
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn truth(&self) -> &ParamVector {
        &self.truth
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }
}

impl MeasurementRig for SimRig {
    fn command(&mut self, target: &Candidate) -> Result<Measurement> {
        if target.joints.len() != self.chain.n_joints() {
            return Err(Error::invalid(format!(
                "target carries {} joint values for a {}-joint arm",
                target.joints.len(),
                self.chain.n_joints()
            )));
        }
        let mut joints = target.joints.clone();
        if self.noise.joint > 0.0 {
            let n = Normal::new(0.0, self.noise.joint).expect("finite scale");
            for (v, j) in joints.0.iter_mut().zip(self.chain.joints()) {
                *v = j.limits.clamp(*v + n.sample(&mut self.rng));
            }
        }
        let mut pose = forward_kinematics(&self.chain, &self.truth, &joints)?;
        if self.noise.pos > 0.0 {
            let n = Normal::new(0.0, self.noise.pos).expect("finite scale");
            pose.p += Vector3::new(n.sample(&mut self.rng), n.sample(&mut self.rng), n.sample(&mut self.rng));
        }
        if self.noise.rot > 0.0 {
            let axis = loop {
                let v: Vector3<f64> = Vector3::from_fn(|_, _| StandardNormal.sample(&mut self.rng));
                if v.norm() > 1e-12 {
                    break v;
                }
            };
            let n = Normal::new(0.0, self.noise.rot).expect("finite scale");
            let angle: f64 = n.sample(&mut self.rng);
            pose.q = pose.q * UnitQuaternion::from_axis_angle(&axis, angle.abs())?;
        }
        Ok(Measurement {
            joints: JointVector(joints.0),
            pose,
        })
    }
}
