//! Denavit-Hartenberg serial chains.
//!
//! A [`DhChain`] holds the nominal per-joint DH records plus the fixed base
//! and tool transforms. The DH parameters themselves are passed around as a
//! flat [`ParamVector`] laid out `[φ_1..φ_n, α_1..α_n, a_1..a_n, d_1..d_n]`
//! so that calibration can perturb them without rebuilding the chain.
//!
//! Identification Jacobians have 7 rows per configuration, ordered
//! `[q_w, q_x, q_y, q_z, p_x, p_y, p_z]`, and one column per DH parameter.
//!
//! The minimum number of configurations is `⌈m / 7⌉` for `m` unknown
//! parameters, since each pose measurement contributes 7 scalars.

use nalgebra::{DMatrix, Matrix4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geom::{align_sign, Pose};

/// Central-difference step for identification Jacobians (rad or m).
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Relative singular-value threshold for numerical rank.
pub const RANK_TOL: f64 = 1e-8;
/// Component rows contributed by one pose measurement.
pub const ROWS_PER_POSE: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointLimits {
    pub lo: f64,
    pub hi: f64,
}

impl JointLimits {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= hi) {
            return Err(Error::invalid(format!("joint limits [{lo}, {hi}] are empty")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }

    pub fn clamp(&self, v: f64) -> f64 {
        v.clamp(self.lo, self.hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DhJoint {
    pub kind: JointKind,
    /// Joint angle offset, rad.
    pub phi: f64,
    /// Twist angle, rad.
    pub alpha: f64,
    /// Link length, m.
    pub a: f64,
    /// Link offset, m.
    pub d: f64,
    pub limits: JointLimits,
}

impl DhJoint {
    pub fn new(kind: JointKind, phi: f64, alpha: f64, a: f64, d: f64, limits: JointLimits) -> Result<Self> {
        if [phi, alpha, a, d].iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("DH parameters must be finite"));
        }
        if kind == JointKind::Revolute {
            let two_pi = 2.0 * std::f64::consts::PI;
            if limits.lo < -two_pi || limits.hi > two_pi {
                return Err(Error::invalid(format!(
                    "revolute limits [{}, {}] exceed [-2π, 2π]",
                    limits.lo, limits.hi
                )));
            }
        }
        Ok(Self {
            kind,
            phi,
            alpha,
            a,
            d,
            limits,
        })
    }

    /// Revolute joint with symmetric ±π limits; mostly useful in tests.
    pub fn revolute(phi: f64, alpha: f64, a: f64, d: f64) -> Self {
        Self {
            kind: JointKind::Revolute,
            phi,
            alpha,
            a,
            d,
            limits: JointLimits {
                lo: -std::f64::consts::PI,
                hi: std::f64::consts::PI,
            },
        }
    }
}

/// Which DH quantity a [`ParamVector`] entry refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Phi,
    Alpha,
    A,
    D,
}

impl ParamKind {
    pub const ALL: [ParamKind; 4] = [ParamKind::Phi, ParamKind::Alpha, ParamKind::A, ParamKind::D];

    pub fn name(&self) -> &'static str {
        match self {
            ParamKind::Phi => "phi",
            ParamKind::Alpha => "alpha",
            ParamKind::A => "a",
            ParamKind::D => "d",
        }
    }

    pub fn is_angle(&self) -> bool {
        matches!(self, ParamKind::Phi | ParamKind::Alpha)
    }

    fn block(&self) -> usize {
        match self {
            ParamKind::Phi => 0,
            ParamKind::Alpha => 1,
            ParamKind::A => 2,
            ParamKind::D => 3,
        }
    }
}

/// Flat DH parameter vector of length `4 n_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>, n_joints: usize) -> Result<Self> {
        if values.len() != 4 * n_joints {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, expected {}",
                values.len(),
                4 * n_joints
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(n_joints: usize) -> Self {
        Self(vec![0.0; 4 * n_joints])
    }

    /// Assembles the vector from per-kind blocks of equal length.
    pub fn from_blocks(phi: &[f64], alpha: &[f64], a: &[f64], d: &[f64]) -> Result<Self> {
        let n = phi.len();
        if alpha.len() != n || a.len() != n || d.len() != n {
            return Err(Error::invalid("DH parameter blocks differ in length"));
        }
        Ok(Self([phi, alpha, a, d].concat()))
    }

    pub fn n_joints(&self) -> usize {
        self.0.len() / 4
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn index_of(&self, kind: ParamKind, joint: usize) -> usize {
        kind.block() * self.n_joints() + joint
    }

    pub fn get(&self, kind: ParamKind, joint: usize) -> f64 {
        self.0[self.index_of(kind, joint)]
    }

    pub fn set(&mut self, kind: ParamKind, joint: usize, value: f64) {
        let i = self.index_of(kind, joint);
        self.0[i] = value;
    }

    /// `(kind, joint)` of flat index `i`.
    pub fn describe(&self, i: usize) -> (ParamKind, usize) {
        let n = self.n_joints();
        (ParamKind::ALL[i / n], i % n)
    }

    pub fn label(&self, i: usize) -> String {
        let (kind, joint) = self.describe(i);
        format!("{}_{}", kind.name(), joint + 1)
    }

    pub fn add(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ParamVector) -> ParamVector {
        ParamVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Joint variables, one per joint (rad for revolute, m for prismatic).
#[derive(Debug, Clone, PartialEq)]
pub struct JointVector(pub Vec<f64>);

impl JointVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DhChain {
    joints: Vec<DhJoint>,
    base: Pose,
    tool: Pose,
}

impl DhChain {
    pub fn new(joints: Vec<DhJoint>, base: Pose, tool: Pose) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("a chain needs at least one joint"));
        }
        Ok(Self { joints, base, tool })
    }

    pub fn joints(&self) -> &[DhJoint] {
        &self.joints
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn n_params(&self) -> usize {
        4 * self.joints.len()
    }

    pub fn base(&self) -> &Pose {
        &self.base
    }

    pub fn tool(&self) -> &Pose {
        &self.tool
    }

    /// Nominal parameters Ψ stored in the joint records.
    pub fn params(&self) -> ParamVector {
        let phi: Vec<f64> = self.joints.iter().map(|j| j.phi).collect();
        let alpha: Vec<f64> = self.joints.iter().map(|j| j.alpha).collect();
        let a: Vec<f64> = self.joints.iter().map(|j| j.a).collect();
        let d: Vec<f64> = self.joints.iter().map(|j| j.d).collect();
        ParamVector::from_blocks(&phi, &alpha, &a, &d).expect("blocks share the joint count")
    }

    /// Copy of the chain with joint records replaced by `params`.
    pub fn with_params(&self, params: &ParamVector) -> Result<Self> {
        self.check_params(params)?;
        let mut joints = self.joints.clone();
        for (i, j) in joints.iter_mut().enumerate() {
            j.phi = params.get(ParamKind::Phi, i);
            j.alpha = params.get(ParamKind::Alpha, i);
            j.a = params.get(ParamKind::A, i);
            j.d = params.get(ParamKind::D, i);
        }
        Ok(Self {
            joints,
            base: self.base,
            tool: self.tool,
        })
    }

    /// Sum of `|a_i| + |d_i|`, an upper bound on the link reach.
    pub fn reach(&self) -> f64 {
        self.joints.iter().map(|j| j.a.abs() + j.d.abs()).sum()
    }

    /// Joint vector drawn uniformly inside the joint limits.
    pub fn random_joints<R: Rng + ?Sized>(&self, rng: &mut R) -> JointVector {
        JointVector(
            self.joints
                .iter()
                .map(|j| {
                    if j.limits.lo == j.limits.hi {
                        j.limits.lo
                    } else {
                        rng.random_range(j.limits.lo..=j.limits.hi)
                    }
                })
                .collect(),
        )
    }

    pub fn within_limits(&self, theta: &JointVector) -> bool {
        theta.len() == self.n_joints() && self.joints.iter().zip(&theta.0).all(|(j, v)| j.limits.contains(*v))
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "parameter vector has length {}, chain needs {}",
                params.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    fn check_joints(&self, theta: &JointVector) -> Result<()> {
        if theta.len() != self.n_joints() {
            return Err(Error::invalid(format!(
                "joint vector has length {}, chain has {} joints",
                theta.len(),
                self.n_joints()
            )));
        }
        if theta.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("joint variables must be finite"));
        }
        Ok(())
    }
}

fn link_matrix(kind: JointKind, phi: f64, alpha: f64, a: f64, d: f64, theta: f64) -> Matrix4<f64> {
    let (angle, offset) = match kind {
        JointKind::Revolute => (phi + theta, d),
        JointKind::Prismatic => (phi, d + theta),
    };
    let (sp, cp) = angle.sin_cos();
    let (sa, ca) = alpha.sin_cos();
    #[rustfmt::skip]
    let m = Matrix4::new(
        cp, -sp * ca,  sp * sa, a * cp,
        sp,  cp * ca, -cp * sa, a * sp,
        0.0,      sa,       ca, offset,
        0.0,     0.0,      0.0, 1.0,
    );
    m
}

/// Homogeneous transform between adjacent link frames.
pub fn dh_link_transform(joint: &DhJoint, theta: f64) -> Matrix4<f64> {
    link_matrix(joint.kind, joint.phi, joint.alpha, joint.a, joint.d, theta)
}

/// Homogeneous end-effector transform `f_B (∏ T_i) f_T`.
pub fn forward_transform(chain: &DhChain, params: &ParamVector, theta: &JointVector) -> Result<Matrix4<f64>> {
    chain.check_params(params)?;
    chain.check_joints(theta)?;
    let mut t = chain.base.to_homogeneous();
    for (i, j) in chain.joints.iter().enumerate() {
        t *= link_matrix(
            j.kind,
            params.get(ParamKind::Phi, i),
            params.get(ParamKind::Alpha, i),
            params.get(ParamKind::A, i),
            params.get(ParamKind::D, i),
            theta.0[i],
        );
    }
    Ok(t * chain.tool.to_homogeneous())
}

/// End-effector pose with canonical quaternion sign.
pub fn forward_kinematics(chain: &DhChain, params: &ParamVector, theta: &JointVector) -> Result<Pose> {
    Pose::from_homogeneous(&forward_transform(chain, params, theta)?)
}

fn pose_components(pose: &Pose) -> [f64; 7] {
    let q = pose.q.to_array();
    [q[0], q[1], q[2], q[3], pose.p.x, pose.p.y, pose.p.z]
}

/// 7×4n_j identification Jacobian by central differences with the default step.
pub fn identification_jacobian(chain: &DhChain, params: &ParamVector, theta: &JointVector) -> Result<DMatrix<f64>> {
    identification_jacobian_with_step(chain, params, theta, JACOBIAN_STEP)
}

/// Central-difference Jacobian with step `h`. Perturbed quaternions are
/// sign-aligned to the unperturbed one before differencing.
pub fn identification_jacobian_with_step(
    chain: &DhChain,
    params: &ParamVector,
    theta: &JointVector,
    h: f64,
) -> Result<DMatrix<f64>> {
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let center = forward_kinematics(chain, params, theta)?;
    let mut jac = DMatrix::zeros(ROWS_PER_POSE, params.len());
    let mut work = params.clone();
    for k in 0..params.len() {
        let orig = work.as_slice()[k];
        work.as_mut_slice()[k] = orig + h;
        let mut plus = forward_kinematics(chain, &work, theta)?;
        work.as_mut_slice()[k] = orig - h;
        let mut minus = forward_kinematics(chain, &work, theta)?;
        work.as_mut_slice()[k] = orig;
        plus.q = align_sign(&center.q, &plus.q);
        minus.q = align_sign(&center.q, &minus.q);
        let (cp, cm) = (pose_components(&plus), pose_components(&minus));
        for r in 0..ROWS_PER_POSE {
            jac[(r, k)] = (cp[r] - cm[r]) / (2.0 * h);
        }
    }
    Ok(jac)
}

/// Vertical stack of identification Jacobians, one 7-row block per configuration.
pub fn stacked_jacobian(chain: &DhChain, params: &ParamVector, thetas: &[JointVector]) -> Result<DMatrix<f64>> {
    if thetas.is_empty() {
        return Err(Error::invalid("stacked Jacobian needs at least one configuration"));
    }
    let mut out = DMatrix::zeros(ROWS_PER_POSE * thetas.len(), params.len());
    for (i, theta) in thetas.iter().enumerate() {
        let block = identification_jacobian(chain, params, theta)?;
        out.view_mut((ROWS_PER_POSE * i, 0), (ROWS_PER_POSE, params.len()))
            .copy_from(&block);
    }
    Ok(out)
}

/// Selection of parameter columns that take part in identification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnMask(Vec<bool>);

impl ColumnMask {
    pub fn all(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn none(n: usize) -> Self {
        Self(vec![false; n])
    }

    pub fn from_bools(v: Vec<bool>) -> Self {
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn set(&mut self, i: usize, on: bool) {
        self.0[i] = on;
    }

    /// Number of masked-in columns.
    pub fn count(&self) -> usize {
        self.0.iter().filter(|b| **b).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }

    /// Minimum number of pose measurements for the masked-in columns.
    pub fn min_measurements(&self) -> usize {
        self.count().div_ceil(ROWS_PER_POSE).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankReport {
    pub rank: usize,
    pub ok: bool,
    /// Masked-in columns rejected by greedy admission.
    pub deficient: Vec<usize>,
    pub singular_values: Vec<f64>,
}

fn select_columns(jn: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(jn.nrows(), cols.len(), |r, c| jn[(r, cols[c])])
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Greedily admits columns of `jn` in index order, keeping each one only if
/// the smallest singular value of the admitted set stays above `threshold`.
fn greedy_admit(jn: &DMatrix<f64>, candidates: &[usize], threshold: f64) -> (Vec<usize>, Vec<usize>) {
    let mut admitted: Vec<usize> = Vec::new();
    let mut rejected = Vec::new();
    for &c in candidates {
        admitted.push(c);
        let s = singular_values(&select_columns(jn, &admitted));
        let smallest = s.last().copied().unwrap_or(0.0);
        if !(smallest > threshold) || admitted.len() > jn.nrows() {
            admitted.pop();
            rejected.push(c);
        }
    }
    (admitted, rejected)
}

/// Numerical rank test on the masked-in columns of a stacked Jacobian.
/// Singular values above `RANK_TOL · σ_max` count toward the rank.
pub fn identifiability_check(jn: &DMatrix<f64>, mask: &ColumnMask) -> Result<RankReport> {
    if mask.len() != jn.ncols() {
        return Err(Error::invalid(format!(
            "mask has {} entries, Jacobian has {} columns",
            mask.len(),
            jn.ncols()
        )));
    }
    let cols = mask.indices();
    if jn.nrows() < cols.len() {
        return Err(Error::TooFewMeasurements {
            columns: cols.len(),
            required: mask.min_measurements(),
            have: jn.nrows() / ROWS_PER_POSE,
        });
    }
    let sub = select_columns(jn, &cols);
    let s = singular_values(&sub);
    let sigma_max = s.first().copied().unwrap_or(0.0);
    let threshold = RANK_TOL * sigma_max;
    let rank = if sigma_max > 0.0 {
        s.iter().filter(|v| **v > threshold).count()
    } else {
        0
    };
    let ok = rank == cols.len() && !cols.is_empty();
    let deficient = if ok {
        Vec::new()
    } else if sigma_max > 0.0 {
        greedy_admit(jn, &cols, threshold).1
    } else {
        cols.clone()
    };
    Ok(RankReport {
        rank,
        ok,
        deficient,
        singular_values: s,
    })
}

/// Identifiable-column mask from `n_probe` seeded random configurations.
///
/// Columns are admitted in parameter order, so of a dependent group the
/// earliest-indexed members are kept.
pub fn detect_dependent_columns(chain: &DhChain, params: &ParamVector, n_probe: usize, seed: u64) -> Result<ColumnMask> {
    if n_probe * ROWS_PER_POSE < params.len() {
        return Err(Error::TooFewMeasurements {
            columns: params.len(),
            required: params.len().div_ceil(ROWS_PER_POSE),
            have: n_probe,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<JointVector> = (0..n_probe).map(|_| chain.random_joints(&mut rng)).collect();
    let jn = stacked_jacobian(chain, params, &thetas)?;
    Ok(mask_from_jacobian(&jn))
}

/// Greedy identifiable-column mask of an already stacked Jacobian.
pub fn mask_from_jacobian(jn: &DMatrix<f64>) -> ColumnMask {
    let s = singular_values(jn);
    let threshold = RANK_TOL * s.first().copied().unwrap_or(0.0);
    let all: Vec<usize> = (0..jn.ncols()).collect();
    let mut mask = ColumnMask::none(jn.ncols());
    if threshold > 0.0 {
        for c in greedy_admit(jn, &all, threshold).0 {
            mask.set(c, true);
        }
    }
    mask
}
