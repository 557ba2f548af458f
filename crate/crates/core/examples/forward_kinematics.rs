//! Forward kinematics and identification Jacobian of the shipped 7-DOF arm.

use kincal::harness::ExperimentConfig;
use kincal::kinematics::{detect_dependent_columns, forward_kinematics, identification_jacobian};
use kincal::JointVector;

fn main() -> kincal::Result<()> {
    let exp = ExperimentConfig::shipped_default().build()?;
    let theta = JointVector(vec![0.1, -0.4, 0.2, 1.2, -0.3, 0.5, 0.0]);

    let nominal = forward_kinematics(&exp.chain, &exp.nominal, &theta)?;
    let actual = forward_kinematics(&exp.chain, &exp.truth(), &theta)?;
    let p = nominal.p;
    println!("nominal tool position [{:.4}, {:.4}, {:.4}] m", p.x, p.y, p.z);
    println!("position error from injected DH errors: {:.4} m", (actual.p - nominal.p).norm());

    let j = identification_jacobian(&exp.chain, &exp.nominal, &theta)?;
    println!("jacobian is {}x{}", j.nrows(), j.ncols());

    let mask = detect_dependent_columns(&exp.chain, &exp.nominal, 64, 1)?;
    println!("{} of {} parameters identifiable", mask.count(), mask.len());
    Ok(())
}
