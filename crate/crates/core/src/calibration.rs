//! DH-error recovery from pose measurements.
//!
//! Each pass linearizes forward kinematics at the current parameter
//! estimate, stacks the 7-per-measurement residual, and solves
//!
//! ```text
//! min ‖Δ - J δ‖²   s.t.   lb ≤ δ ≤ ub
//! ```
//!
//! over the identifiable columns with an active-set method. The bounds
//! shrink by the correction already applied so that the total correction
//! stays inside the original box.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geom::{align_sign, Pose};
use crate::kinematics::{
    forward_kinematics, identifiability_check, stacked_jacobian, ColumnMask, DhChain, JointVector, ParamKind,
    ParamVector, ROWS_PER_POSE,
};

/// One recorded measurement: the joint readings and the observed pose.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub joints: JointVector,
    pub pose: Pose,
}

/// Element-wise correction bounds; zero must be feasible.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::invalid("lower and upper bounds differ in length"));
        }
        if let Some(i) = lower
            .iter()
            .zip(&upper)
            .position(|(l, u)| !(*l <= 0.0 && 0.0 <= *u))
        {
            return Err(Error::invalid(format!(
                "bounds at index {i} ([{}, {}]) exclude the zero correction",
                lower[i], upper[i]
            )));
        }
        Ok(Self { lower, upper })
    }

    /// `±angle` on φ and α, `±length` on a and d.
    pub fn symmetric(n_joints: usize, angle: f64, length: f64) -> Result<Self> {
        let template = ParamVector::zeros(n_joints);
        let half: Vec<f64> = (0..template.len())
            .map(|i| if template.describe(i).0.is_angle() { angle } else { length })
            .collect();
        Self::new(half.iter().map(|v| -v).collect(), half)
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    /// Bounds left after a correction `consumed` has been applied.
    pub fn remaining(&self, consumed: &[f64]) -> Self {
        let lower = self.lower.iter().zip(consumed).map(|(l, c)| (l - c).min(0.0)).collect();
        let upper = self.upper.iter().zip(consumed).map(|(u, c)| (u - c).max(0.0)).collect();
        Self { lower, upper }
    }
}

/// Stacked pose residual, 7 entries per measurement
/// `[Δq_w, Δq_x, Δq_y, Δq_z, Δp_x, Δp_y, Δp_z]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual(DVector<f64>);

impl Residual {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Root-mean-square of the position entries.
    pub fn position_rms(&self) -> f64 {
        let n = self.0.len() / ROWS_PER_POSE;
        if n == 0 {
            return 0.0;
        }
        let sq: f64 = (0..n)
            .flat_map(|i| (4..7).map(move |r| i * ROWS_PER_POSE + r))
            .map(|k| self.0[k] * self.0[k])
            .sum();
        (sq / (3 * n) as f64).sqrt()
    }
}

impl From<DVector<f64>> for Residual {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

/// Measured minus computed, with each measured quaternion sign-aligned to
/// its computed counterpart first.
pub fn build_residual(measured: &[Pose], computed: &[Pose]) -> Result<Residual> {
    if measured.len() != computed.len() {
        return Err(Error::invalid(format!(
            "{} measured poses vs {} computed poses",
            measured.len(),
            computed.len()
        )));
    }
    if measured.is_empty() {
        return Err(Error::invalid("residual needs at least one measurement"));
    }
    let mut out = DVector::zeros(ROWS_PER_POSE * measured.len());
    for (i, (m, c)) in measured.iter().zip(computed).enumerate() {
        let qm = align_sign(&c.q, &m.q).to_array();
        let qc = c.q.to_array();
        let base = ROWS_PER_POSE * i;
        for k in 0..4 {
            out[base + k] = qm[k] - qc[k];
        }
        for k in 0..3 {
            out[base + 4 + k] = m.p[k] - c.p[k];
        }
    }
    Ok(Residual(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Lower,
    Upper,
    /// Zero-width box.
    Fixed,
}

/// Box-constrained linear least squares `min ‖b - A x‖²`, `l ≤ x ≤ u`,
/// for full-column-rank `A` and `l ≤ 0 ≤ u`.
///
/// Primal active set starting from `x = 0`: solve over the free set with
/// bound variables held fixed, step back to the first bound crossed,
/// and release the bound variable with the worst multiplier once the free
/// solve is interior.
pub fn box_least_squares(a: &DMatrix<f64>, b: &DVector<f64>, lower: &[f64], upper: &[f64]) -> Result<DVector<f64>> {
    let n = a.ncols();
    if b.len() != a.nrows() || lower.len() != n || upper.len() != n {
        return Err(Error::invalid("box least-squares dimensions disagree"));
    }
    let mut x: DVector<f64> = DVector::zeros(n);
    let mut status: Vec<Status> = (0..n)
        .map(|i| {
            if lower[i] == upper[i] {
                Status::Fixed
            } else {
                Status::Free
            }
        })
        .collect();
    let grad_scale = (a.transpose() * b).amax().max(1.0);
    let kkt_tol = 1e-12 * grad_scale;
    let max_rounds = 20 * n + 100;

    for _ in 0..max_rounds {
        // Inner loop: drive the free set to an interior solution.
        loop {
            let free: Vec<usize> = (0..n).filter(|&i| status[i] == Status::Free).collect();
            if free.is_empty() {
                break;
            }
            let mut rhs = b.clone();
            for i in (0..n).filter(|&i| status[i] != Status::Free) {
                rhs -= a.column(i) * x[i];
            }
            let sub = DMatrix::from_fn(a.nrows(), free.len(), |r, c| a[(r, free[c])]);
            let z = least_squares(&sub, &rhs)?;
            let mut step = 1.0f64;
            let mut blocking: Option<(usize, Status)> = None;
            for (k, &i) in free.iter().enumerate() {
                let (target, side): (f64, Status) = if z[k] > upper[i] {
                    (upper[i], Status::Upper)
                } else if z[k] < lower[i] {
                    (lower[i], Status::Lower)
                } else {
                    continue;
                };
                let denom = z[k] - x[i];
                let t: f64 = if denom == 0.0 { 0.0 } else { ((target - x[i]) / denom).clamp(0.0, 1.0) };
                if t < step || blocking.is_none() {
                    step = step.min(t);
                    blocking = Some((i, side));
                }
            }
            match blocking {
                None => {
                    for (k, &i) in free.iter().enumerate() {
                        x[i] = z[k];
                    }
                    break;
                }
                Some(_) => {
                    for (k, &i) in free.iter().enumerate() {
                        x[i] += step * (z[k] - x[i]);
                    }
                    for &i in &free {
                        if x[i] >= upper[i] {
                            x[i] = upper[i];
                            status[i] = Status::Upper;
                        } else if x[i] <= lower[i] {
                            x[i] = lower[i];
                            status[i] = Status::Lower;
                        }
                    }
                    if let Some((i, side)) = blocking {
                        status[i] = side;
                        x[i] = if side == Status::Upper { upper[i] } else { lower[i] };
                    }
                }
            }
        }

        // Gradient of ½‖Ax - b‖².
        let g = a.transpose() * (a * &x - b);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let violation = match status[i] {
                Status::Lower => -g[i],
                Status::Upper => g[i],
                _ => continue,
            };
            if violation > kkt_tol && worst.is_none_or(|(_, v)| violation > v) {
                worst = Some((i, violation));
            }
        }
        match worst {
            None => return Ok(x),
            Some((i, _)) => status[i] = Status::Free,
        }
    }
    Err(Error::IllConditioned(
        "active-set iteration limit reached in box least squares".into(),
    ))
}

fn least_squares(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let qr = a.clone().qr();
    let qtb = qr.q().transpose() * b;
    qr.r()
        .solve_upper_triangular(&qtb)
        .ok_or_else(|| Error::IllConditioned("rank-deficient least-squares block".into()))
}

/// Solves the bounded correction over the masked-in columns; masked-out
/// entries of the result are zero.
pub fn solve_box_ls(jn: &DMatrix<f64>, residual: &Residual, bounds: &Bounds, mask: &ColumnMask) -> Result<ParamVector> {
    let n = jn.ncols();
    if residual.len() != jn.nrows() || bounds.len() != n || mask.len() != n {
        return Err(Error::invalid(format!(
            "solve_box_ls: J is {}×{}, residual {}, bounds {}, mask {}",
            jn.nrows(),
            n,
            residual.len(),
            bounds.len(),
            mask.len()
        )));
    }
    if !n.is_multiple_of(4) {
        return Err(Error::invalid("parameter count must be a multiple of 4"));
    }
    let report = identifiability_check(jn, mask)?;
    if !report.ok {
        return Err(Error::NotIdentifiable {
            deficient: report.deficient,
        });
    }
    let cols = mask.indices();
    let sub = DMatrix::from_fn(jn.nrows(), cols.len(), |r, c| jn[(r, cols[c])]);
    let lower: Vec<f64> = cols.iter().map(|&i| bounds.lower()[i]).collect();
    let upper: Vec<f64> = cols.iter().map(|&i| bounds.upper()[i]).collect();
    let x = box_least_squares(&sub, residual.as_vector(), &lower, &upper)?;
    let mut full = vec![0.0; n];
    for (k, &i) in cols.iter().enumerate() {
        full[i] = x[k];
    }
    ParamVector::new(full, n / 4)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSettings {
    pub max_iters: usize,
    /// Stop once the step norm ‖δ*‖ falls to this value.
    pub tol: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            max_iters: 20,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CalibrationStep {
    /// Residual norm at the linearization point of this iteration.
    pub residual_norm: f64,
    pub step_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    /// Corrected parameters Ψ*.
    pub params: ParamVector,
    /// Total correction Ψ* - Ψ.
    pub correction: ParamVector,
    pub history: Vec<CalibrationStep>,
    pub converged: bool,
    pub final_residual: Residual,
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    chain: DhChain,
    params: ParamVector,
    measurements: Vec<Measurement>,
    bounds: Bounds,
    mask: ColumnMask,
}

impl CalibrationProblem {
    /// Validates sizes, the measurement count for the mask, and the rank of
    /// the stacked Jacobian at the measurement set.
    pub fn new(
        chain: DhChain,
        params: ParamVector,
        measurements: Vec<Measurement>,
        bounds: Bounds,
        mask: ColumnMask,
    ) -> Result<Self> {
        let n = chain.n_params();
        if params.len() != n || bounds.len() != n || mask.len() != n {
            return Err(Error::invalid(format!(
                "calibration problem sizes disagree: chain {n}, params {}, bounds {}, mask {}",
                params.len(),
                bounds.len(),
                mask.len()
            )));
        }
        if measurements.len() < mask.min_measurements() {
            return Err(Error::TooFewMeasurements {
                columns: mask.count(),
                required: mask.min_measurements(),
                have: measurements.len(),
            });
        }
        let thetas: Vec<JointVector> = measurements.iter().map(|m| m.joints.clone()).collect();
        let jn = stacked_jacobian(&chain, &params, &thetas)?;
        let report = identifiability_check(&jn, &mask)?;
        if !report.ok {
            return Err(Error::NotIdentifiable {
                deficient: report.deficient,
            });
        }
        Ok(Self {
            chain,
            params,
            measurements,
            bounds,
            mask,
        })
    }

    pub fn chain(&self) -> &DhChain {
        &self.chain
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub fn measurements(&self) -> &[Measurement] {
        &self.measurements
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn mask(&self) -> &ColumnMask {
        &self.mask
    }

    /// Residual of the measurements against FK at `params`.
    pub fn residual_at(&self, params: &ParamVector) -> Result<Residual> {
        let computed = self
            .measurements
            .iter()
            .map(|m| forward_kinematics(&self.chain, params, &m.joints))
            .collect::<Result<Vec<_>>>()?;
        let measured: Vec<Pose> = self.measurements.iter().map(|m| m.pose).collect();
        build_residual(&measured, &computed)
    }
}

/// Iterated linearize-and-solve until the step norm reaches `settings.tol`
/// or `settings.max_iters` passes have run.
pub fn calibrate(problem: &CalibrationProblem, settings: &CalibrationSettings) -> Result<CalibrationOutcome> {
    let thetas: Vec<JointVector> = problem.measurements.iter().map(|m| m.joints.clone()).collect();
    let mut params = problem.params.clone();
    let mut history: Vec<CalibrationStep> = Vec::new();
    let mut rising = 0usize;
    let mut converged = false;

    for _ in 0..settings.max_iters.max(1) {
        let residual = problem.residual_at(&params)?;
        let residual_norm = residual.norm();
        if let Some(prev) = history.last() {
            if residual_norm > prev.residual_norm {
                rising += 1;
                if rising >= 3 {
                    history.push(CalibrationStep {
                        residual_norm,
                        step_norm: f64::NAN,
                    });
                    return Err(Error::NonConvergence { history });
                }
            } else {
                rising = 0;
            }
        }
        let jn = stacked_jacobian(&problem.chain, &params, &thetas)?;
        let consumed = params.sub(&problem.params);
        let bounds = problem.bounds.remaining(consumed.as_slice());
        let step = solve_box_ls(&jn, &residual, &bounds, &problem.mask)?;
        let step_norm = step.norm();
        history.push(CalibrationStep {
            residual_norm,
            step_norm,
        });
        params = clamp_to_box(&params.add(&step), &problem.params, &problem.bounds);
        if step_norm <= settings.tol {
            converged = true;
            break;
        }
    }
    let final_residual = problem.residual_at(&params)?;
    Ok(CalibrationOutcome {
        correction: params.sub(&problem.params),
        params,
        history,
        converged,
        final_residual,
    })
}

// Rounding in Ψ + δ can leave the box by an ulp.
fn clamp_to_box(params: &ParamVector, origin: &ParamVector, bounds: &Bounds) -> ParamVector {
    let mut out = params.clone();
    for (i, v) in out.as_mut_slice().iter_mut().enumerate() {
        let o = origin.as_slice()[i];
        *v = v.clamp(o + bounds.lower()[i], o + bounds.upper()[i]);
    }
    out
}

/// Labels of the masked-in parameters, e.g. `alpha_2`.
pub fn masked_labels(params: &ParamVector, mask: &ColumnMask) -> Vec<String> {
    mask.indices().into_iter().map(|i| params.label(i)).collect()
}

/// Which DH kind each flat index refers to.
pub fn param_kinds(n_joints: usize) -> Vec<ParamKind> {
    let template = ParamVector::zeros(n_joints);
    (0..template.len()).map(|i| template.describe(i).0).collect()
}
