//! Rotation conversions and distances on S³ and SE(3).

use std::f64::consts::PI;

use kincal::geom::{geodesic_distance_s3, quat_to_rotmat, rotmat_to_quat, se3_distance, Se3Metric};
use kincal::{Pose, UnitQuaternion};
use nalgebra::Vector3;

fn main() -> kincal::Result<()> {
    let z = Vector3::z();
    let a = UnitQuaternion::from_axis_angle(&z, 0.3)?;
    let b = UnitQuaternion::from_axis_angle(&z, 1.1)?;
    println!("d(a, b)   = {:.6} rad (rotation angle 0.8)", geodesic_distance_s3(&a, &b));

    let flipped = UnitQuaternion::new(-a.w(), -a.x(), -a.y(), -a.z())?;
    println!("d(a, -a)  = {:.3e}", geodesic_distance_s3(&a, &flipped));

    let half_turn = UnitQuaternion::from_axis_angle(&Vector3::x(), PI)?;
    let back = rotmat_to_quat(&quat_to_rotmat(&half_turn));
    println!("half turn round trip: {:?}", back.to_array());

    let metric = Se3Metric::new(0.1, 0.9)?;
    let x1 = Pose::new(a, Vector3::new(0.0, 0.0, 0.0));
    let x2 = Pose::new(b, Vector3::new(0.3, 0.4, 0.0));
    println!("se3 distance = {:.6}", se3_distance(&x1, &x2, &metric));
    Ok(())
}
