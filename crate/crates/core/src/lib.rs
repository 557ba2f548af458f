//! Bayesian experimental design for serial-manipulator calibration.
//!
//! Poses live on S³ × R³; the acquisition model is a Gaussian process with
//! a product of a heat-kernel on S³ and a squared-exponential on position.
//! Selected poses feed a bounded least-squares recovery of DH errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayesopt;
pub mod calibration;
pub mod error;
pub mod geom;
pub mod gp;
pub mod harness;
pub mod kernels;
pub mod kinematics;

pub use error::{Error, Result};
pub use geom::{Pose, UnitQuaternion};
pub use kinematics::{DhChain, DhJoint, JointVector, ParamVector};
