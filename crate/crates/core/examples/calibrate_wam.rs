//! Noiseless end-to-end calibration of the shipped arm from random
//! configurations, compared against the injected errors.

use kincal::calibration::{calibrate, CalibrationProblem, Measurement};
use kincal::harness::experiment::identifiable_mask;
use kincal::harness::{ExperimentConfig, NoiseModel, SimRig};
use kincal::bayesopt::{Candidate, MeasurementRig};
use kincal::kinematics::forward_kinematics;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> kincal::Result<()> {
    let exp = ExperimentConfig::shipped_default().build()?;
    let mut rig = SimRig::new(exp.chain.clone(), exp.truth(), NoiseModel::none(), 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let measurements = (0..12)
        .map(|_| {
            let joints = exp.chain.random_joints(&mut rng);
            let pose = forward_kinematics(&exp.chain, &exp.nominal, &joints)?;
            rig.command(&Candidate { pose, joints })
        })
        .collect::<kincal::Result<Vec<Measurement>>>()?;

    let mask = identifiable_mask(&exp)?;
    let problem = CalibrationProblem::new(exp.chain.clone(), exp.nominal.clone(), measurements, exp.bounds.clone(), mask)?;
    let out = calibrate(&problem, &exp.calibration)?;
    for step in &out.history {
        println!("residual {:.3e}  step {:.3e}", step.residual_norm, step.step_norm);
    }
    let injected = exp.truth().sub(&exp.nominal);
    println!("max parameter error {:.3e}", out.correction.sub(&injected).as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(())
}
