//! Design run against the uniform baseline on a few seeds, with the final
//! objective and the parameter recovery error of each.

use kincal::harness::experiment::execute;
use kincal::harness::{ExperimentConfig, Single};

fn main() -> kincal::Result<()> {
    println!("seed  mode    final f      param error");
    for seed in 0..4 {
        let mut cfg = ExperimentConfig::shipped_default();
        cfg.seed = seed;
        let exp = cfg.build()?;
        for mode in [Single::Bo, Single::Random] {
            let r = execute(&exp, mode, &cfg)?;
            let err = r.summary.per_param_abs_error.iter().map(|e| e * e).sum::<f64>().sqrt();
            println!("{seed:>4}  {:<6}  {:>11.4e}  {err:.4e}", mode.name(), r.summary.final_objective);
        }
    }
    Ok(())
}
