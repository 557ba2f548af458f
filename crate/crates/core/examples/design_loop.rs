//! One GP-UCB design run on the simulated arm with interleaved calibration,
//! printed iteration by iteration.

use kincal::bayesopt::{run_design, Interleave};
use kincal::harness::experiment::identifiable_mask;
use kincal::harness::{ExperimentConfig, SimRig};

fn main() -> kincal::Result<()> {
    let mut cfg = ExperimentConfig::shipped_default();
    cfg.iterations = 10;
    let exp = cfg.build()?;
    let mut design = exp.design.clone();
    design.interleave = Some(Interleave {
        bounds: exp.bounds.clone(),
        mask: identifiable_mask(&exp)?,
        settings: exp.calibration,
    });
    let mut rig = SimRig::new(exp.chain.clone(), exp.truth(), exp.noise, design.seed)?;
    let run = run_design(&mut rig, &exp.chain, &exp.nominal, &design)?;
    println!("iter  f            ucb      gp_var  recalibrated");
    for r in &run.records {
        println!(
            "{:>4}  {:>11.4e}  {:>7.4}  {:>6.3}  {}",
            r.iteration, r.objective.f, r.ucb_value, r.gp_var, r.recalibrated
        );
    }
    Ok(())
}
