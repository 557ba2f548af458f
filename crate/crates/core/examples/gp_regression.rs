//! GP regression over poses: posterior mean and variance near and far from data.

use kincal::gp::GpModel;
use kincal::kernels::{ProductKernelParams, S3KernelParams, SeKernelParams};
use kincal::{Pose, UnitQuaternion};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn target(x: &Pose) -> f64 {
    -(x.p.norm() + 0.1 * (1.0 - x.q.w().abs()))
}

fn main() -> kincal::Result<()> {
    let kernel = ProductKernelParams::new(S3KernelParams::new(0.5, 1.0, 80)?, SeKernelParams::new(0.2, 1.0, 0.0)?, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data: Vec<(Pose, f64)> = (0..25)
        .map(|i| {
            let p = Vector3::new(0.04 * i as f64, 0.1, 0.0);
            let x = Pose::new(UnitQuaternion::random(&mut rng), p);
            (x, target(&x))
        })
        .collect();
    let model = GpModel::new(kernel, 1e-3, 0.0)?.with_observations(data.iter().copied())?;

    let seen = data[10].0;
    let post = model.posterior(&seen);
    println!("at a training pose: mean {:.5} (truth {:.5}), variance {:.2e}", post.mean, target(&seen), post.variance);

    let far = Pose::new(UnitQuaternion::random(&mut rng), Vector3::new(5.0, 5.0, 5.0));
    let post = model.posterior(&far);
    println!("far from data: mean {:.5}, variance {:.3}", post.mean, post.variance);
    Ok(())
}
