//! Exact Gaussian-process regression over poses.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geom::Pose;
use crate::kernels::{gram, Kernel, ProductKernel, ProductKernelParams};

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
/// Negative variances down to this magnitude are rounding noise.
pub const BENIGN_VARIANCE_CLAMP: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Posterior {
    pub mean: f64,
    /// Clamped at 0 from below.
    pub variance: f64,
    /// `k(x,x) - K(x,X) K̃⁻¹ K(X,x)` before clamping.
    pub raw_variance: f64,
}

impl Posterior {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn clamped(&self) -> bool {
        self.raw_variance < 0.0
    }

    /// A clamp larger than [`BENIGN_VARIANCE_CLAMP`] points at a badly
    /// conditioned Gram matrix.
    pub fn clamp_is_benign(&self) -> bool {
        self.raw_variance >= -BENIGN_VARIANCE_CLAMP
    }
}

#[derive(Debug, Clone)]
struct Factor {
    chol: Cholesky<f64, Dyn>,
    // K̃⁻¹ (Y - μ)
    alpha: DVector<f64>,
    jitter: f64,
}

/// GP with constant prior mean and the S³×R³ product kernel.
///
/// Values are immutable: [`GpModel::add_observation`] returns a new model
/// with a fresh factorization.
#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: ProductKernel,
    noise_scale: f64,
    prior_mean: f64,
    inputs: Vec<Pose>,
    targets: Vec<f64>,
    factor: Option<Factor>,
}

impl GpModel {
    pub fn new(kernel: ProductKernelParams, noise_scale: f64, prior_mean: f64) -> Result<Self> {
        if !(noise_scale >= 0.0) || !noise_scale.is_finite() {
            return Err(Error::invalid("observation noise scale must be finite and ≥ 0"));
        }
        if !prior_mean.is_finite() {
            return Err(Error::invalid("prior mean must be finite"));
        }
        Ok(Self {
            kernel: ProductKernel::new(kernel),
            noise_scale,
            prior_mean,
            inputs: Vec::new(),
            targets: Vec::new(),
            factor: None,
        })
    }

    pub fn kernel(&self) -> &ProductKernel {
        &self.kernel
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Pose] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Jitter that had to be added to the diagonal, 0 if none.
    pub fn jitter(&self) -> f64 {
        self.factor.as_ref().map_or(0.0, |f| f.jitter)
    }

    pub fn add_observation(&self, x: Pose, y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::invalid(format!("observation {y} is not finite")));
        }
        let mut next = self.clone();
        next.inputs.push(x);
        next.targets.push(y);
        next.refactor()?;
        Ok(next)
    }

    /// Adds several observations and factorizes once.
    pub fn with_observations(&self, data: impl IntoIterator<Item = (Pose, f64)>) -> Result<Self> {
        let mut next = self.clone();
        for (x, y) in data {
            if !y.is_finite() {
                return Err(Error::invalid(format!("observation {y} is not finite")));
            }
            next.inputs.push(x);
            next.targets.push(y);
        }
        next.refactor()?;
        Ok(next)
    }

    fn refactor(&mut self) -> Result<()> {
        if self.inputs.is_empty() {
            self.factor = None;
            return Ok(());
        }
        let n = self.inputs.len();
        let mut k = gram(&self.inputs, &self.kernel);
        let noise = self.noise_scale * self.noise_scale;
        for i in 0..n {
            k[(i, i)] += noise;
        }
        let resid = DVector::from_iterator(n, self.targets.iter().map(|y| y - self.prior_mean));
        let mut jitter = 0.0;
        loop {
            let mut kj = k.clone();
            if jitter > 0.0 {
                for i in 0..n {
                    kj[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(kj) {
                let alpha = chol.solve(&resid);
                self.factor = Some(Factor { chol, alpha, jitter });
                return Ok(());
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if jitter > JITTER_MAX * (1.0 + 1e-9) {
                return Err(Error::IllConditioned(format!(
                    "Gram matrix of {n} observations not positive definite even with jitter {JITTER_MAX:e}"
                )));
            }
        }
    }

    fn cross_covariance(&self, x: &Pose) -> DVector<f64> {
        DVector::from_iterator(self.inputs.len(), self.inputs.iter().map(|xi| self.kernel.eval(x, xi)))
    }

    pub fn posterior(&self, x: &Pose) -> Posterior {
        let prior_var = self.kernel.eval(x, x);
        let Some(f) = &self.factor else {
            return Posterior {
                mean: self.prior_mean,
                variance: prior_var,
                raw_variance: prior_var,
            };
        };
        let ks = self.cross_covariance(x);
        let mean = self.prior_mean + ks.dot(&f.alpha);
        let v = f
            .chol
            .l()
            .solve_lower_triangular(&ks)
            .expect("Cholesky factor has a nonzero diagonal");
        let raw = prior_var - v.dot(&v);
        Posterior {
            mean,
            variance: raw.max(0.0),
            raw_variance: raw,
        }
    }

    pub fn posterior_batch(&self, xs: &[Pose]) -> Vec<Posterior> {
        xs.iter().map(|x| self.posterior(x)).collect()
    }

    /// Dense `K̃` including noise and jitter, for diagnostics.
    pub fn noisy_gram(&self) -> DMatrix<f64> {
        let mut k = gram(&self.inputs, &self.kernel);
        let extra = self.noise_scale * self.noise_scale + self.jitter();
        for i in 0..self.inputs.len() {
            k[(i, i)] += extra;
        }
        k
    }
}
