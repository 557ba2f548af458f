//! Simulation, configuration and result files around the design loop.

pub mod config;
pub mod experiment;
pub mod rig;

pub use config::{load_config, Experiment, ExperimentConfig};
pub use experiment::{calibrate_offline, kernel_check, resolve_seed, run_experiment, Mode, Single};
pub use rig::{NoiseModel, SimRig};
