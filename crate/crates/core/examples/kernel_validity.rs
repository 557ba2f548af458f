//! Gram matrices of the naive SE(3) exponential kernel can be indefinite,
//! the S³ heat kernel and the product kernel stay positive semidefinite.

use kincal::geom::Se3Metric;
use kincal::kernels::known_invalid::{counterexample_poses, k_naive_se3};
use kincal::kernels::{
    gram, k_product, k_s3, min_eigenvalue, sym_eigenvalues, ProductKernelParams, S3KernelParams, SeKernelParams,
};
use kincal::{Pose, UnitQuaternion};

fn main() -> kincal::Result<()> {
    let poses = counterexample_poses();
    let metric = Se3Metric::new(0.1, 0.9)?;
    for beta in [12.0, 20.0] {
        let naive = |a: &Pose, b: &Pose| k_naive_se3(a, b, beta, &metric);
        let eig = sym_eigenvalues(&gram(&poses, &naive));
        println!("naive kernel, beta {beta}: eigenvalues {eig:.5?}");
    }

    let s3 = S3KernelParams::new(0.5, 1.0, 80)?;
    let qs: Vec<UnitQuaternion> = poses.iter().map(|x| x.q).collect();
    let s3_kernel = |a: &UnitQuaternion, b: &UnitQuaternion| k_s3(a, b, &s3);
    println!("s3 kernel min eigenvalue {:.3e}", min_eigenvalue(&gram(&qs, &s3_kernel)));

    let product = ProductKernelParams::new(s3, SeKernelParams::new(0.2, 1.0, 0.0)?, 1.0)?;
    let product_kernel = |a: &Pose, b: &Pose| k_product(a, b, &product);
    println!("product kernel min eigenvalue {:.3e}", min_eigenvalue(&gram(&poses, &product_kernel)));
    Ok(())
}
