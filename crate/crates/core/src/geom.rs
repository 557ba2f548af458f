//! Quaternion and rigid-displacement geometry.
//!
//! Quaternions are stored in `(w, x, y, z)` order everywhere in this crate.
//! A unit quaternion and its negation describe the same rotation; every
//! distance here is invariant to that sign, and [`align_sign`] picks the
//! representative closest to a reference when component differences matter.

use std::ops::{Mul, Neg};

use nalgebra::{Matrix3, Matrix4, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Accepted deviation from unit norm for raw quaternion input.
pub const UNIT_NORM_TOL: f64 = 1e-9;
/// Accepted deviation from orthonormality for raw rotation input.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// Rotation as a point on S³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Builds a unit quaternion from components that are already unit-norm
    /// within [`UNIT_NORM_TOL`]. The result is renormalized.
    pub fn new(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::invalid(format!(
                "quaternion ({w}, {x}, {y}, {z}) has norm {norm}, expected 1"
            )));
        }
        Ok(Self::from_raw_unchecked(w / norm, x / norm, y / norm, z / norm))
    }

    /// Normalizes arbitrary nonzero components.
    pub fn normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let norm = (w * w + x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(Error::invalid("cannot normalize a zero or non-finite quaternion"));
        }
        Ok(Self::from_raw_unchecked(w / norm, x / norm, y / norm, z / norm))
    }

    pub fn from_array(q: [f64; 4]) -> Result<Self> {
        Self::new(q[0], q[1], q[2], q[3])
    }

    fn from_raw_unchecked(w: f64, x: f64, y: f64, z: f64) -> Self {
        Self { w, x, y, z }
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !(n > 0.0) || !angle.is_finite() {
            return Err(Error::invalid("axis-angle needs a nonzero axis and finite angle"));
        }
        let (s, c) = (angle / 2.0).sin_cos();
        let v = axis * (s / n);
        Self::normalize(c, v.x, v.y, v.z)
    }

    /// Uniformly distributed rotation (normalized 4D Gaussian).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        loop {
            let c: [f64; 4] = [
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
                rng.sample(StandardNormal),
            ];
            if let Ok(q) = Self::normalize(c[0], c[1], c[2], c[3]) {
                if c.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
                    return q;
                }
            }
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn vector_part(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    pub fn conjugate(&self) -> Self {
        Self::from_raw_unchecked(self.w, -self.x, -self.y, -self.z)
    }

    /// Rotation-level equality: `q` and `-q` compare equal.
    pub fn equiv_rotation(&self, other: &Self, tol: f64) -> bool {
        let a = self.to_array();
        let b = other.to_array();
        let same = a.iter().zip(&b).all(|(u, v)| (u - v).abs() <= tol);
        let flipped = a.iter().zip(&b).all(|(u, v)| (u + v).abs() <= tol);
        same || flipped
    }

    pub fn to_rotation_matrix(&self) -> RotationMatrix {
        quat_to_rotmat(self)
    }
}

impl Neg for UnitQuaternion {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_raw_unchecked(-self.w, -self.x, -self.y, -self.z)
    }
}

/// Hamilton product, renormalized to keep drift out of long compositions.
impl Mul for UnitQuaternion {
    type Output = Self;
    fn mul(self, r: Self) -> Self {
        let l = self;
        let w = l.w * r.w - l.x * r.x - l.y * r.y - l.z * r.z;
        let x = l.w * r.x + l.x * r.w + l.y * r.z - l.z * r.y;
        let y = l.w * r.y - l.x * r.z + l.y * r.w + l.z * r.x;
        let z = l.w * r.z + l.x * r.y - l.y * r.x + l.z * r.w;
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self::from_raw_unchecked(w / n, x / n, y / n, z / n)
    }
}

/// Element of SO(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    /// Validates `RᵀR = I` and `det R = 1` within [`ORTHONORMAL_TOL`].
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        Self::with_tolerance(m, ORTHONORMAL_TOL)
    }

    pub fn with_tolerance(m: Matrix3<f64>, tol: f64) -> Result<Self> {
        let ortho = (m.transpose() * m - Matrix3::identity()).abs().max();
        let det = m.determinant();
        if !(ortho <= tol) || !((det - 1.0).abs() <= tol) {
            return Err(Error::invalid(format!(
                "matrix is not a rotation (|RᵀR - I| = {ortho:e}, det = {det})"
            )));
        }
        Ok(Self(m))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_quaternion(&self) -> UnitQuaternion {
        rotmat_to_quat(self)
    }
}

/// Rigid displacement `(q, p)`, position in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub q: UnitQuaternion,
    pub p: Vector3<f64>,
}

impl Pose {
    pub fn new(q: UnitQuaternion, p: Vector3<f64>) -> Self {
        Self { q, p }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::IDENTITY, Vector3::zeros())
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let r = quat_to_rotmat(&self.q);
        let mut t = Matrix4::identity();
        t.fixed_view_mut::<3, 3>(0, 0).copy_from(r.matrix());
        t.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.p);
        t
    }

    /// Extracts the pose from a homogeneous matrix. The rotation block is
    /// checked against a loose tolerance since it usually comes from a long
    /// product of link transforms.
    pub fn from_homogeneous(t: &Matrix4<f64>) -> Result<Self> {
        let r = RotationMatrix::with_tolerance(t.fixed_view::<3, 3>(0, 0).into_owned(), 1e-8)?;
        Ok(Self::new(
            rotmat_to_quat(&r),
            t.fixed_view::<3, 1>(0, 3).into_owned(),
        ))
    }
}

/// Weights balancing translation against rotation in [`se3_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se3Metric {
    gamma_pos: f64,
    gamma_rot: f64,
}

impl Se3Metric {
    pub fn new(gamma_pos: f64, gamma_rot: f64) -> Result<Self> {
        if !(gamma_pos > 0.0) || !(gamma_rot > 0.0) {
            return Err(Error::invalid("SE(3) metric weights must be positive"));
        }
        if ((gamma_pos + gamma_rot) - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "SE(3) metric weights must sum to 1, got {}",
                gamma_pos + gamma_rot
            )));
        }
        Ok(Self {
            gamma_pos,
            gamma_rot,
        })
    }

    pub fn gamma_pos(&self) -> f64 {
        self.gamma_pos
    }

    pub fn gamma_rot(&self) -> f64 {
        self.gamma_rot
    }
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// `R = I + 2w[v]× + 2[v]×[v]×`. Invariant to the sign of `q`.
pub fn quat_to_rotmat(q: &UnitQuaternion) -> RotationMatrix {
    let s = skew(&q.vector_part());
    RotationMatrix(Matrix3::identity() + s * (2.0 * q.w) + s * s * 2.0)
}

/// Quaternion of a rotation matrix, canonicalized to `w ≥ 0`.
///
/// The four magnitudes `½√(1 ± R11 ± R22 ± R33)` are evaluated and the
/// largest one is taken as the pivot; the remaining components come from
/// the off-diagonal sums and differences divided by the pivot. In exact
/// arithmetic this is the square-root/sign closed form, but it stays
/// accurate when some components are near zero (small or half-turn
/// rotations), where the plain square roots lose half the digits.
pub fn rotmat_to_quat(r: &RotationMatrix) -> UnitQuaternion {
    let m = r.matrix();
    let (r11, r22, r33) = (m[(0, 0)], m[(1, 1)], m[(2, 2)]);
    let args = [
        1.0 + r11 + r22 + r33,
        1.0 + r11 - r22 - r33,
        1.0 - r11 + r22 - r33,
        1.0 - r11 - r22 + r33,
    ];
    let (pivot, arg) = args
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, a)| if a > best.1 { (i, a) } else { best });
    // Degenerate square-root arguments are clamped to 0; the pivot argument
    // is at least 1 for any rotation, so this only guards rounding.
    let s = 0.5 * arg.max(0.0).sqrt();
    let k = 0.25 / s;
    let (w, x, y, z) = match pivot {
        0 => (
            s,
            (m[(2, 1)] - m[(1, 2)]) * k,
            (m[(0, 2)] - m[(2, 0)]) * k,
            (m[(1, 0)] - m[(0, 1)]) * k,
        ),
        1 => (
            (m[(2, 1)] - m[(1, 2)]) * k,
            s,
            (m[(0, 1)] + m[(1, 0)]) * k,
            (m[(0, 2)] + m[(2, 0)]) * k,
        ),
        2 => (
            (m[(0, 2)] - m[(2, 0)]) * k,
            (m[(0, 1)] + m[(1, 0)]) * k,
            s,
            (m[(1, 2)] + m[(2, 1)]) * k,
        ),
        _ => (
            (m[(1, 0)] - m[(0, 1)]) * k,
            (m[(0, 2)] + m[(2, 0)]) * k,
            (m[(1, 2)] + m[(2, 1)]) * k,
            s,
        ),
    };
    let q = UnitQuaternion::normalize(w, x, y, z).expect("rotation pivot is nonzero");
    canonical_sign(q)
}

/// Nonnegative scalar part; for `w = 0` the first nonzero vector component
/// is made positive.
pub fn canonical_sign(q: UnitQuaternion) -> UnitQuaternion {
    let c = q.to_array();
    match c.iter().find(|v| **v != 0.0) {
        Some(v) if *v < 0.0 => -q,
        _ => q,
    }
}

/// Geodesic distance between rotations, `2 acos |⟨q1, q2⟩|`, in `[0, π]`.
///
/// Evaluated as `4 atan2(‖q1 - s q2‖, ‖q1 + s q2‖)` with `s` the sign of
/// the inner product, which is exact at zero where `acos` loses half the
/// digits.
pub fn geodesic_distance_s3(q1: &UnitQuaternion, q2: &UnitQuaternion) -> f64 {
    let a = q1.to_array();
    let b = align_sign(q1, q2).to_array();
    let (mut diff, mut sum) = (0.0, 0.0);
    for k in 0..4 {
        diff += (a[k] - b[k]).powi(2);
        sum += (a[k] + b[k]).powi(2);
    }
    4.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Returns whichever of `q`, `-q` has nonnegative inner product with
/// `reference`. A zero inner product keeps `q`.
pub fn align_sign(reference: &UnitQuaternion, q: &UnitQuaternion) -> UnitQuaternion {
    if reference.dot(q) < 0.0 {
        -*q
    } else {
        *q
    }
}

/// `√((γ1‖Δp‖)² + (γ2 d_S3)²)`.
pub fn se3_distance(a: &Pose, b: &Pose, metric: &Se3Metric) -> f64 {
    let dp = metric.gamma_pos * (a.p - b.p).norm();
    let dq = metric.gamma_rot * geodesic_distance_s3(&a.q, &b.q);
    dp.hypot(dq)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn q(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion {
        UnitQuaternion::new(w, x, y, z).unwrap()
    }

    fn quat_gap(a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
        let d = a.to_array();
        let e = b.to_array();
        let minus: f64 = d.iter().zip(&e).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        let plus: f64 = d.iter().zip(&e).map(|(u, v)| (u + v).powi(2)).sum::<f64>().sqrt();
        minus.min(plus)
    }

    // Rotation angle of R1ᵀR2 from its trace, independent of quaternions.
    fn relative_angle(r1: &RotationMatrix, r2: &RotationMatrix) -> f64 {
        let rel = r1.matrix().transpose() * r2.matrix();
        // atan2 form stays accurate near 0 and π.
        let skew = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        );
        skew.norm().atan2(rel.trace() - 1.0)
    }

    #[test]
    fn quat_to_rotmat_examples() {
        let id = quat_to_rotmat(&UnitQuaternion::IDENTITY);
        assert_eq!(*id.matrix(), Matrix3::identity());

        let rx = quat_to_rotmat(&q(0.0, 1.0, 0.0, 0.0));
        assert!((rx.matrix() - Matrix3::from_diagonal(&Vector3::new(1.0, -1.0, -1.0))).abs().max() < 1e-15);

        let rz = quat_to_rotmat(&q(FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((rz.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(matches!(
            UnitQuaternion::new(1.0, 1.0, 0.0, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(UnitQuaternion::normalize(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn rotmat_to_quat_examples() {
        let id = rotmat_to_quat(&RotationMatrix::identity());
        assert_eq!(id.to_array(), [1.0, 0.0, 0.0, 0.0]);

        let rz = RotationMatrix::new(Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)).unwrap();
        let qz = rotmat_to_quat(&rz);
        for (a, b) in qz.to_array().iter().zip(&[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]) {
            assert!(close(*a, *b, 1e-15));
        }
    }

    #[test]
    fn rotmat_to_quat_rejects_non_rotation() {
        assert!(RotationMatrix::new(Matrix3::identity() * 2.0).is_err());
        assert!(RotationMatrix::new(Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0))).is_err());
    }

    #[test]
    fn half_turn_canonical_sign() {
        // w = 0, first nonzero vector component forced positive.
        let q = rotmat_to_quat(&quat_to_rotmat(&q(0.0, -0.6, 0.8, 0.0)));
        assert_eq!(q.w(), 0.0);
        assert!(q.x() > 0.0);
        assert!(close(q.x(), 0.6, 1e-15) && close(q.y(), -0.8, 1e-15));
    }

    #[test]
    fn random_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let q0 = UnitQuaternion::random(&mut rng);
            let r = quat_to_rotmat(&q0);
            let q1 = rotmat_to_quat(&r);
            assert!(quat_gap(&q0, &q1) <= 1e-9);
            assert!(q1.w() >= 0.0);
            let r1 = quat_to_rotmat(&q1);
            assert!((r1.matrix() - r.matrix()).abs().max() <= 1e-9);
        }
    }

    #[test]
    fn geodesic_examples() {
        let e = UnitQuaternion::IDENTITY;
        assert_eq!(geodesic_distance_s3(&e, &e), 0.0);
        assert!(close(geodesic_distance_s3(&e, &q(0.0, 1.0, 0.0, 0.0)), PI, 1e-15));
        assert!(close(
            geodesic_distance_s3(&e, &q(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0)),
            FRAC_PI_2,
            1e-15
        ));
    }

    #[test]
    fn geodesic_is_metric_on_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let a = UnitQuaternion::random(&mut rng);
            let b = UnitQuaternion::random(&mut rng);
            let c = UnitQuaternion::random(&mut rng);
            let ab = geodesic_distance_s3(&a, &b);
            assert_eq!(ab, geodesic_distance_s3(&b, &a));
            assert!((0.0..=PI).contains(&ab));
            assert_eq!(ab, geodesic_distance_s3(&a, &-b));
            assert!(geodesic_distance_s3(&a, &a) < 1e-7);
            assert!(geodesic_distance_s3(&a, &-a) < 1e-7);
            let ac = geodesic_distance_s3(&a, &c);
            let cb = geodesic_distance_s3(&c, &b);
            assert!(ab <= ac + cb + 1e-12);
        }
    }

    #[test]
    fn geodesic_matches_relative_rotation_angle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let a = UnitQuaternion::random(&mut rng);
            let b = UnitQuaternion::random(&mut rng);
            let angle = relative_angle(&quat_to_rotmat(&a), &quat_to_rotmat(&b));
            assert!(close(geodesic_distance_s3(&a, &b), angle, 1e-9));
        }
    }

    #[test]
    fn align_sign_examples() {
        let e = UnitQuaternion::IDENTITY;
        assert_eq!(align_sign(&e, &-e), e);
        let h = q(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0, 0.0);
        assert_eq!(align_sign(&e, &h), h);
        let orth = q(0.0, -1.0, 0.0, 0.0);
        assert_eq!(align_sign(&e, &orth), orth);
    }

    #[test]
    fn se3_distance_examples() {
        let m = Se3Metric::new(0.5, 0.5).unwrap();
        let a = Pose::identity();
        assert_eq!(se3_distance(&a, &a, &m), 0.0);
        let b = Pose::new(UnitQuaternion::IDENTITY, Vector3::new(0.0, 2.0, 0.0));
        assert!(close(se3_distance(&a, &b, &m), 1.0, 1e-15));

        let m = Se3Metric::new(0.1, 0.9).unwrap();
        let c = Pose::new(q(0.0, 1.0, 0.0, 0.0), Vector3::zeros());
        assert!(close(se3_distance(&a, &c, &m), 0.9 * PI, 1e-12));
    }

    #[test]
    fn se3_metric_validation() {
        assert!(Se3Metric::new(0.5, 0.4).is_err());
        assert!(Se3Metric::new(0.0, 1.0).is_err());
    }

    #[test]
    fn se3_distance_is_metric() {
        let m = Se3Metric::new(0.3, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pose = |rng: &mut ChaCha8Rng| {
            Pose::new(
                UnitQuaternion::random(rng),
                Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            )
        };
        for _ in 0..1000 {
            let (a, b, c) = (pose(&mut rng), pose(&mut rng), pose(&mut rng));
            let ab = se3_distance(&a, &b, &m);
            assert_eq!(ab, se3_distance(&b, &a, &m));
            assert!(ab >= 0.0);
            assert!(ab <= se3_distance(&a, &c, &m) + se3_distance(&c, &b, &m) + 1e-12);
            let a_flip = Pose::new(-a.q, a.p);
            assert!(se3_distance(&a, &a_flip, &m) < 1e-7);
        }
    }

    #[test]
    fn homogeneous_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pose = Pose::new(UnitQuaternion::random(&mut rng), Vector3::new(0.1, -0.2, 0.3));
        let back = Pose::from_homogeneous(&pose.to_homogeneous()).unwrap();
        assert!(back.q.equiv_rotation(&pose.q, 1e-12));
        assert!((back.p - pose.p).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn rotmat_round_trip_up_to_sign(w in -1.0f64..1.0, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            prop_assume!(w * w + x * x + y * y + z * z > 1e-6);
            let q0 = UnitQuaternion::normalize(w, x, y, z).unwrap();
            let q1 = rotmat_to_quat(&quat_to_rotmat(&q0));
            prop_assert!(quat_gap(&q0, &q1) <= 1e-9);
            prop_assert!(((q1.dot(&q1)) - 1.0).abs() <= 1e-12);
            prop_assert_eq!(quat_to_rotmat(&q0), quat_to_rotmat(&-q0));
        }

        #[test]
        fn align_sign_preserves_distance(a in prop::array::uniform4(-1.0f64..1.0), b in prop::array::uniform4(-1.0f64..1.0)) {
            prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 1e-6 && b.iter().map(|v| v * v).sum::<f64>() > 1e-6);
            let qa = UnitQuaternion::normalize(a[0], a[1], a[2], a[3]).unwrap();
            let qb = UnitQuaternion::normalize(b[0], b[1], b[2], b[3]).unwrap();
            let aligned = align_sign(&qa, &qb);
            prop_assert!(qa.dot(&aligned) >= 0.0);
            prop_assert_eq!(geodesic_distance_s3(&qa, &aligned), geodesic_distance_s3(&qa, &qb));
        }
    }
}
