//! Kernels on R³, S³ and S³×R³, plus Gram-matrix tooling.
//!
//! The S³ kernel is the truncated heat-kernel series in Gegenbauer
//! polynomials `C_n^(1)` (Chebyshev polynomials of the second kind):
//!
//! ```text
//! k(q1, q2) = σ²/C · Σ_{n=0}^{N} (n+1) C_n^(1)(cos d) exp(-κ² n(n+2) / 2),   d = d_S3(q1, q2)
//! ```
//!
//! with `C` the same sum at `d = 0`, so `k(q, q) = σ²` holds for the
//! truncated series itself. The product kernel multiplies it with a
//! squared-exponential kernel over positions.
//!
//! The plain squared-exponential kernel of the SE(3) distance is not
//! positive definite; it lives in [`known_invalid`] only so that the
//! counterexample can be reproduced.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geom::{geodesic_distance_s3, Pose, UnitQuaternion};

/// Default series truncation order for the S³ kernel.
pub const DEFAULT_TRUNCATION: usize = 80;

/// Below this `|sin θ|` the Gegenbauer closed form gives way to the recurrence.
const SIN_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeKernelParams {
    /// Length scale β, in input units.
    pub length_scale: f64,
    /// Signal scale σ_f.
    pub signal_scale: f64,
    /// Same-point scale σ_n (Kronecker term).
    pub same_point_scale: f64,
}

impl SeKernelParams {
    pub fn new(length_scale: f64, signal_scale: f64, same_point_scale: f64) -> Result<Self> {
        if !(length_scale > 0.0) || !(signal_scale > 0.0) || !(same_point_scale >= 0.0) {
            return Err(Error::invalid(
                "squared-exponential kernel needs β > 0, σ_f > 0, σ_n ≥ 0",
            ));
        }
        Ok(Self {
            length_scale,
            signal_scale,
            same_point_scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S3KernelParams {
    /// Length scale κ.
    pub length_scale: f64,
    /// Variability scale σ; `k(q, q) = σ²`.
    pub variance_scale: f64,
    /// Truncation order N of the series.
    pub truncation: usize,
}

impl S3KernelParams {
    pub fn new(length_scale: f64, variance_scale: f64, truncation: usize) -> Result<Self> {
        if !(length_scale > 0.0) || !(variance_scale > 0.0) || truncation < 1 {
            return Err(Error::invalid("S³ kernel needs κ > 0, σ > 0, N ≥ 1"));
        }
        Ok(Self {
            length_scale,
            variance_scale,
            truncation,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProductKernelParams {
    pub s3: S3KernelParams,
    pub se: SeKernelParams,
    /// Overall scale σ_s.
    pub scale: f64,
}

impl ProductKernelParams {
    pub fn new(s3: S3KernelParams, se: SeKernelParams, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::invalid("product kernel needs σ_s > 0"));
        }
        Ok(Self { s3, se, scale })
    }
}

/// Symmetric kernel function over `X`.
pub trait Kernel<X: ?Sized> {
    fn eval(&self, a: &X, b: &X) -> f64;
}

impl<X: ?Sized, F: Fn(&X, &X) -> f64> Kernel<X> for F {
    fn eval(&self, a: &X, b: &X) -> f64 {
        self(a, b)
    }
}

/// `σ_f² exp(-‖p1 - p2‖² / 2β²) + σ_n² [p1 = p2]`.
pub fn k_se(p1: &[f64], p2: &[f64], params: &SeKernelParams) -> Result<f64> {
    if p1.len() != p2.len() {
        return Err(Error::invalid(format!(
            "squared-exponential inputs differ in dimension ({} vs {})",
            p1.len(),
            p2.len()
        )));
    }
    Ok(se_unchecked(p1, p2, params))
}

fn se_unchecked(p1: &[f64], p2: &[f64], params: &SeKernelParams) -> f64 {
    let sq: f64 = p1.iter().zip(p2).map(|(a, b)| (a - b) * (a - b)).sum();
    let beta = params.length_scale;
    let mut k = params.signal_scale.powi(2) * (-sq / (2.0 * beta * beta)).exp();
    if p1 == p2 {
        k += params.same_point_scale.powi(2);
    }
    k
}

/// `C_n^(1)(t) = sin((n+1)θ) / sin θ` for `t = cos θ`.
pub fn gegenbauer_c1(n: usize, t: f64) -> Result<f64> {
    if !t.is_finite() || t.abs() > 1.0 + 1e-12 {
        return Err(Error::invalid(format!("Gegenbauer argument {t} outside [-1, 1]")));
    }
    Ok(gegenbauer_unchecked(n, t.clamp(-1.0, 1.0)))
}

fn gegenbauer_unchecked(n: usize, t: f64) -> f64 {
    let theta = t.acos();
    let s = theta.sin();
    if s.abs() < SIN_FLOOR {
        gegenbauer_recurrence(n, t)
    } else {
        ((n + 1) as f64 * theta).sin() / s
    }
}

/// Three-term recurrence `C_{k+1} = 2t C_k - C_{k-1}`, `C_0 = 1`, `C_1 = 2t`.
pub fn gegenbauer_recurrence(n: usize, t: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 2.0 * t);
    if n == 0 {
        return prev;
    }
    for _ in 1..n {
        let next = 2.0 * t * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Truncated S³ heat-kernel series with precomputed weights.
#[derive(Debug, Clone, PartialEq)]
pub struct S3Kernel {
    params: S3KernelParams,
    // (n + 1) exp(-κ² n(n+2)/2)
    weights: Vec<f64>,
    normalizer: f64,
}

impl S3Kernel {
    pub fn new(params: S3KernelParams) -> Self {
        let kappa2 = params.length_scale * params.length_scale;
        let weights: Vec<f64> = (0..=params.truncation)
            .map(|n| {
                let nf = n as f64;
                (nf + 1.0) * (-0.5 * kappa2 * nf * (nf + 2.0)).exp()
            })
            .collect();
        // C_n^(1)(1) = n + 1
        let normalizer = weights
            .iter()
            .enumerate()
            .map(|(n, w)| w * (n as f64 + 1.0))
            .sum();
        Self {
            params,
            weights,
            normalizer,
        }
    }

    pub fn params(&self) -> &S3KernelParams {
        &self.params
    }

    /// Normalizing constant `C` of the truncated series.
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Kernel value as a function of the geodesic distance in `[0, π]`.
    pub fn eval_distance(&self, d: f64) -> f64 {
        let t = d.cos().clamp(-1.0, 1.0);
        let sum: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(n, w)| w * gegenbauer_unchecked(n, t))
            .sum();
        self.params.variance_scale.powi(2) * sum / self.normalizer
    }
}

impl Kernel<UnitQuaternion> for S3Kernel {
    fn eval(&self, a: &UnitQuaternion, b: &UnitQuaternion) -> f64 {
        self.eval_distance(geodesic_distance_s3(a, b))
    }
}

pub fn k_s3(q1: &UnitQuaternion, q2: &UnitQuaternion, params: &S3KernelParams) -> f64 {
    S3Kernel::new(*params).eval(q1, q2)
}

/// `σ_s² k_S3(q_i, q_j) k_SE(p_i, p_j)`; the SE factor carries no same-point term.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductKernel {
    s3: S3Kernel,
    se: SeKernelParams,
    scale: f64,
}

impl ProductKernel {
    pub fn new(params: ProductKernelParams) -> Self {
        let mut se = params.se;
        se.same_point_scale = 0.0;
        Self {
            s3: S3Kernel::new(params.s3),
            se,
            scale: params.scale,
        }
    }

    pub fn params(&self) -> ProductKernelParams {
        ProductKernelParams {
            s3: *self.s3.params(),
            se: self.se,
            scale: self.scale,
        }
    }

    /// Prior variance `k(x, x)`, identical for every pose.
    pub fn prior_variance(&self) -> f64 {
        self.scale.powi(2) * self.s3.params().variance_scale.powi(2) * self.se.signal_scale.powi(2)
    }
}

impl Kernel<Pose> for ProductKernel {
    fn eval(&self, a: &Pose, b: &Pose) -> f64 {
        self.scale.powi(2) * self.s3.eval(&a.q, &b.q) * se_unchecked(a.p.as_slice(), b.p.as_slice(), &self.se)
    }
}

pub fn k_product(x1: &Pose, x2: &Pose, params: &ProductKernelParams) -> f64 {
    ProductKernel::new(*params).eval(x1, x2)
}

/// Kernels kept for reproducing validity counterexamples.
///
/// Nothing in the modeling path uses these.
pub mod known_invalid {
    use crate::geom::{se3_distance, Pose, Se3Metric, UnitQuaternion};

    /// `exp(-d²_SE(3) / 2β²)` with unit signal scale. Not positive definite
    /// in general.
    pub fn k_naive_se3(x1: &Pose, x2: &Pose, beta: f64, metric: &Se3Metric) -> f64 {
        let d = se3_distance(x1, x2, metric);
        (-(d * d) / (2.0 * beta * beta)).exp()
    }

    /// Four rotations at a common position on which the naive kernel with
    /// `β = 12`, `γ = (0.1, 0.9)` has a negative Gram eigenvalue.
    pub fn counterexample_poses() -> Vec<Pose> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [s, s, 0.0, 0.0], [s, 0.0, s, 0.0]]
            .iter()
            .map(|q| Pose::new(UnitQuaternion::from_array(*q).expect("unit"), nalgebra::Vector3::zeros()))
            .collect()
    }
}

/// `K[i][j] = kernel(x_i, x_j)`, upper triangle evaluated and mirrored.
pub fn gram<X, K: Kernel<X> + ?Sized>(points: &[X], kernel: &K) -> DMatrix<f64> {
    let n = points.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(&points[i], &points[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::NAN)
}
