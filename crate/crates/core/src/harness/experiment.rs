//! Experiment orchestration and result files.
//!
//! A run writes, per mode, `history_<mode>.csv`, `measurements_<mode>.csv`
//! and `summary_<mode>.json` into the output directory. The first line of
//! each CSV and the `wall_time_s` line of each JSON carry the only
//! run-dependent bytes; everything else is a function of config and seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bayesopt::{run_design, run_random_baseline, DesignRecord, DesignRun, Interleave};
use crate::calibration::{calibrate, CalibrationOutcome, CalibrationProblem, CalibrationStep, Measurement};
use crate::error::{Error, Result};
use crate::geom::{Pose, UnitQuaternion};
use crate::kernels::known_invalid::{counterexample_poses, k_naive_se3};
use crate::kernels::{
    gram, min_eigenvalue, sym_eigenvalues, ProductKernel, ProductKernelParams, S3Kernel, S3KernelParams,
};
use crate::kinematics::{detect_dependent_columns, ColumnMask, JointVector};

use super::config::{Experiment, ExperimentConfig};
use super::rig::SimRig;

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "KINCAL_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Bo,
    Random,
    Both,
}

impl Mode {
    fn singles(self) -> &'static [Single] {
        match self {
            Mode::Bo => &[Single::Bo],
            Mode::Random => &[Single::Random],
            Mode::Both => &[Single::Bo, Single::Random],
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bo" => Ok(Mode::Bo),
            "random" => Ok(Mode::Random),
            "both" => Ok(Mode::Both),
            other => Err(Error::invalid(format!("unknown mode `{other}`, expected bo, random or both"))),
        }
    }
}

/// One selection strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Single {
    Bo,
    Random,
}

impl Single {
    pub fn name(self) -> &'static str {
        match self {
            Single::Bo => "bo",
            Single::Random => "random",
        }
    }
}

/// CLI value over environment over config.
pub fn resolve_seed(config_seed: u64, env: Option<&str>, cli: Option<u64>) -> Result<u64> {
    if let Some(s) = cli {
        return Ok(s);
    }
    match env.map(str::trim) {
        Some(v) if !v.is_empty() => v
            .parse()
            .map_err(|_| Error::config(SEED_ENV, format!("`{v}` is not an unsigned integer"))),
        _ => Ok(config_seed),
    }
}

/// Mask of parameters that can be identified at the nominal geometry.
pub fn identifiable_mask(exp: &Experiment) -> Result<ColumnMask> {
    detect_dependent_columns(&exp.chain, &exp.nominal, exp.probe_configurations, exp.design.seed)
}

#[derive(Debug, Clone)]
pub struct ModeResult {
    pub mode: Single,
    pub run: DesignRun,
    pub mask: ColumnMask,
    pub calibration: CalibrationOutcome,
    pub summary: Summary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub mode: String,
    pub config_echo: ExperimentConfig,
    pub final_objective: f64,
    pub objective_history: Vec<f64>,
    pub labels: Vec<String>,
    pub recovered_delta: Vec<f64>,
    pub injected_delta: Vec<f64>,
    pub per_param_abs_error: Vec<f64>,
    pub identifiable_mask: Vec<bool>,
    pub final_params: Vec<f64>,
    pub calibration_converged: bool,
    pub calibration_history: Vec<CalibrationStep>,
    pub iterations: usize,
    pub wall_time_s: f64,
}

// The rig's noise stream is shared by both modes so paired runs see the
// same sensor draws.
const RIG_SALT: u64 = 0xD1B5_4A32_D192_ED03;

/// Runs one strategy end to end, including the final calibration from all
/// measurements. `config_echo` is embedded in the summary.
pub fn execute(exp: &Experiment, mode: Single, config_echo: &ExperimentConfig) -> Result<ModeResult> {
    let start = Instant::now();
    let mask = identifiable_mask(exp)?;
    let mut design = exp.design.clone();
    if exp.interleaved {
        design.interleave = Some(Interleave {
            bounds: exp.bounds.clone(),
            mask: mask.clone(),
            settings: exp.calibration,
        });
    }
    let mut rig = SimRig::new(exp.chain.clone(), exp.truth(), exp.noise, exp.design.seed ^ RIG_SALT)?;
    let run = match mode {
        Single::Bo => run_design(&mut rig, &exp.chain, &exp.nominal, &design)?,
        Single::Random => run_random_baseline(&mut rig, &exp.chain, &exp.nominal, &design)?,
    };
    let problem = CalibrationProblem::new(
        exp.chain.clone(),
        exp.nominal.clone(),
        run.measurements.clone(),
        exp.bounds.clone(),
        mask.clone(),
    )?;
    let calibration = calibrate(&problem, &exp.calibration)?;

    let recovered = calibration.correction.as_slice().to_vec();
    let injected = exp.injected.as_slice().to_vec();
    let summary = Summary {
        mode: mode.name().to_string(),
        config_echo: config_echo.clone(),
        final_objective: run.records.last().map(|r| r.objective.f).unwrap_or(0.0),
        objective_history: run.records.iter().map(|r| r.objective.f).collect(),
        labels: (0..exp.nominal.len()).map(|i| exp.nominal.label(i)).collect(),
        per_param_abs_error: recovered.iter().zip(&injected).map(|(r, i)| (r - i).abs()).collect(),
        recovered_delta: recovered,
        injected_delta: injected,
        identifiable_mask: mask.as_slice().to_vec(),
        final_params: calibration.params.as_slice().to_vec(),
        calibration_converged: calibration.converged,
        calibration_history: calibration.history.clone(),
        iterations: run.records.len(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(ModeResult {
        mode,
        run,
        mask,
        calibration,
        summary,
    })
}

/// Builds the experiment, runs the requested modes and writes their files.
pub fn run_experiment(cfg: &ExperimentConfig, mode: Mode, out: &Path) -> Result<Vec<ModeResult>> {
    let exp = cfg.build()?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut results = Vec::new();
    for &single in mode.singles() {
        let r = execute(&exp, single, cfg)?;
        write_text(&out.join(format!("history_{}.csv", single.name())), &history_csv(single, &r.run.records))?;
        write_text(
            &out.join(format!("measurements_{}.csv", single.name())),
            &measurements_csv(&r.run.measurements, exp.chain.n_joints())?,
        )?;
        write_text(&out.join(format!("summary_{}.json", single.name())), &to_json(&r.summary)?)?;
        results.push(r);
    }
    Ok(results)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn timestamp_line() -> String {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    format!("# generated_unix_s={secs}\n")
}

/// Shortest round-trip text, switching to exponent form for very small or
/// large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let mut out = timestamp_line();
    out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
    Ok(out)
}

pub fn history_header(n_joints: usize) -> Vec<String> {
    let mut h: Vec<String> = ["iter", "mode", "f", "f_p_m", "f_q_rad", "qw", "qx", "qy", "qz", "px", "py", "pz"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((1..=n_joints).map(|i| format!("theta_{i}")));
    h.extend(["ucb_value", "gp_mean", "gp_var"].iter().map(|s| s.to_string()));
    h
}

/// One row per iteration; the pose columns are the commanded target.
pub fn history_csv(mode: Single, records: &[DesignRecord]) -> String {
    let n = records.first().map(|r| r.joints.len()).unwrap_or(0);
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            let mut row = vec![
                r.iteration.to_string(),
                mode.name().to_string(),
                fmt_f64(r.objective.f),
                fmt_f64(r.objective.f_p),
                fmt_f64(r.objective.f_q),
            ];
            row.extend(r.target.q.to_array().iter().map(|v| fmt_f64(*v)));
            row.extend(r.target.p.iter().map(|v| fmt_f64(*v)));
            row.extend(r.joints.as_slice().iter().map(|v| fmt_f64(*v)));
            row.extend([fmt_f64(r.ucb_value), fmt_f64(r.gp_mean), fmt_f64(r.gp_var)]);
            row
        })
        .collect();
    csv_text(&history_header(n), &rows).expect("in-memory csv")
}

pub fn measurement_header(n_joints: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=n_joints).map(|i| format!("theta_{i}")).collect();
    h.extend(["qw", "qx", "qy", "qz", "px", "py", "pz"].iter().map(|s| s.to_string()));
    h
}

pub fn measurements_csv(ms: &[Measurement], n_joints: usize) -> Result<String> {
    let rows: Vec<Vec<String>> = ms
        .iter()
        .map(|m| {
            let mut row: Vec<String> = m.joints.as_slice().iter().map(|v| fmt_f64(*v)).collect();
            row.extend(m.pose.q.to_array().iter().map(|v| fmt_f64(*v)));
            row.extend(m.pose.p.iter().map(|v| fmt_f64(*v)));
            row
        })
        .collect();
    csv_text(&measurement_header(n_joints), &rows)
}

/// Parses a measurement CSV; `#` lines are ignored.
pub fn read_measurements(path: &Path, n_joints: usize) -> Result<Vec<Measurement>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(&text, n_joints)
}

pub fn parse_measurements(text: &str, n_joints: usize) -> Result<Vec<Measurement>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let expected = measurement_header(n_joints);
    let header: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if header != expected {
        return Err(Error::invalid(format!(
            "measurement columns {header:?} do not match {expected:?}"
        )));
    }
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::invalid(format!("measurement row {}: {e}", line + 1)))?;
        let q = UnitQuaternion::normalize(vals[n_joints], vals[n_joints + 1], vals[n_joints + 2], vals[n_joints + 3])?;
        let p = Vector3::new(vals[n_joints + 4], vals[n_joints + 5], vals[n_joints + 6]);
        out.push(Measurement {
            joints: JointVector(vals[..n_joints].to_vec()),
            pose: Pose::new(q, p),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct OfflineReport {
    pub config_echo: ExperimentConfig,
    pub measurements: usize,
    pub labels: Vec<String>,
    pub recovered_delta: Vec<f64>,
    pub injected_delta: Vec<f64>,
    pub identifiable_mask: Vec<bool>,
    pub final_params: Vec<f64>,
    pub converged: bool,
    pub history: Vec<CalibrationStep>,
    pub position_rms_m: f64,
    pub wall_time_s: f64,
}

/// Calibrates the configured nominal chain against recorded measurements
/// and writes `calibration.json`.
pub fn calibrate_offline(cfg: &ExperimentConfig, data: &Path, out: &Path) -> Result<OfflineReport> {
    let start = Instant::now();
    let exp = cfg.build()?;
    let ms = read_measurements(data, exp.chain.n_joints())?;
    let mask = identifiable_mask(&exp)?;
    let problem = CalibrationProblem::new(exp.chain.clone(), exp.nominal.clone(), ms, exp.bounds.clone(), mask.clone())?;
    let outcome = calibrate(&problem, &exp.calibration)?;
    let report = OfflineReport {
        config_echo: cfg.clone(),
        measurements: problem.measurements().len(),
        labels: (0..exp.nominal.len()).map(|i| exp.nominal.label(i)).collect(),
        recovered_delta: outcome.correction.as_slice().to_vec(),
        injected_delta: exp.injected.as_slice().to_vec(),
        identifiable_mask: mask.as_slice().to_vec(),
        final_params: outcome.params.as_slice().to_vec(),
        converged: outcome.converged,
        history: outcome.history,
        position_rms_m: outcome.final_residual.position_rms(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_text(&out.join("calibration.json"), &to_json(&report)?)?;
    Ok(report)
}

/// Published eigenvalues of the naive kernel on [`counterexample_poses`].
pub const NAIVE_REFERENCE: [(f64, [f64; 4]); 2] = [
    (12.0, [-0.0001, 0.0083, 0.0355, 3.9561]),
    (1.0, [0.4725, 0.6940, 1.1404, 1.6929]),
];
pub const NAIVE_REFERENCE_TOL: f64 = 1e-3;
pub const PSD_TOL: f64 = -1e-8;
pub const SUITE_KAPPAS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];
pub const SUITE_SETS: usize = 100;
pub const SUITE_POINTS: usize = 10;

#[derive(Debug, Clone, Serialize)]
pub struct EigenCheck {
    pub beta: f64,
    pub eigenvalues: Vec<f64>,
    pub reference: Vec<f64>,
    pub max_abs_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteCheck {
    pub kernel: String,
    pub kappa: Option<f64>,
    pub sets: usize,
    pub min_eigenvalue: f64,
    /// Sets whose minimum eigenvalue fell below the tolerance.
    pub failing_sets: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub reference_eigenvalues: Vec<EigenCheck>,
    pub valid_suites: Vec<SuiteCheck>,
    /// The naive kernel at `β = 12` on random sets; passes when the suite
    /// flags it.
    pub naive_detection: SuiteCheck,
    pub pass: bool,
}

/// Random poses with positions uniform in `[-1, 1]³`.
pub fn random_pose_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<Pose> {
    (0..n)
        .map(|_| {
            let q = UnitQuaternion::random(rng);
            let p = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            Pose::new(q, p)
        })
        .collect()
}

fn suite<F>(name: &str, kappa: Option<f64>, seed: u64, mut min_eig: F) -> SuiteCheck
where
    F: FnMut(&[Pose]) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    let mut failing = 0;
    for _ in 0..SUITE_SETS {
        let set = random_pose_set(&mut rng, SUITE_POINTS);
        let m = min_eig(&set);
        worst = worst.min(m);
        if m < PSD_TOL {
            failing += 1;
        }
    }
    SuiteCheck {
        kernel: name.to_string(),
        kappa,
        sets: SUITE_SETS,
        min_eigenvalue: worst,
        failing_sets: failing,
        pass: failing == 0,
    }
}

/// Reference-eigenvalue reproduction for the naive kernel plus
/// positive-semidefiniteness suites for the valid kernels.
pub fn kernel_check(cfg: &ExperimentConfig) -> Result<KernelReport> {
    let exp = cfg.build()?;
    let poses = counterexample_poses();
    let reference_eigenvalues: Vec<EigenCheck> = NAIVE_REFERENCE
        .iter()
        .map(|(beta, reference)| {
            let k = |a: &Pose, b: &Pose| k_naive_se3(a, b, *beta, &exp.metric);
            let ev = sym_eigenvalues(&gram(&poses, &k));
            let err = ev.iter().zip(reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            EigenCheck {
                beta: *beta,
                eigenvalues: ev,
                reference: reference.to_vec(),
                max_abs_error: err,
                pass: err <= NAIVE_REFERENCE_TOL,
            }
        })
        .collect();

    let base = exp.design.kernel;
    let mut valid_suites = Vec::new();
    for (i, &kappa) in SUITE_KAPPAS.iter().enumerate() {
        let s3 = S3KernelParams::new(kappa, base.s3.variance_scale, base.s3.truncation)?;
        let ks3 = S3Kernel::new(s3);
        let seed = exp.design.seed.wrapping_add(i as u64);
        valid_suites.push(suite("s3", Some(kappa), seed, |set| {
            let qs: Vec<UnitQuaternion> = set.iter().map(|p| p.q).collect();
            min_eigenvalue(&gram(&qs, &ks3))
        }));
        let kp = ProductKernel::new(ProductKernelParams::new(s3, base.se, base.scale)?);
        valid_suites.push(suite("product", Some(kappa), seed, |set| min_eigenvalue(&gram(set, &kp))));
    }
    let naive = suite("naive_se3", None, exp.design.seed, |set| {
        let k = |a: &Pose, b: &Pose| k_naive_se3(a, b, 12.0, &exp.metric);
        min_eigenvalue(&gram(set, &k))
    });
    let naive_detection = SuiteCheck {
        pass: naive.failing_sets > 0,
        ..naive
    };
    let pass = reference_eigenvalues.iter().all(|c| c.pass) && valid_suites.iter().all(|s| s.pass) && naive_detection.pass;
    Ok(KernelReport {
        reference_eigenvalues,
        valid_suites,
        naive_detection,
        pass,
    })
}

/// Runs [`kernel_check`] and writes `kernel_check.json`.
pub fn kernel_check_to(cfg: &ExperimentConfig, out: &Path) -> Result<(KernelReport, PathBuf)> {
    let report = kernel_check(cfg)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("kernel_check.json");
    write_text(&path, &to_json(&report)?)?;
    Ok((report, path))
}

/// Human-readable one-line summary of a finished mode.
pub fn describe(r: &ModeResult) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{}: {} iterations, final objective {:.6}, calibration {}",
        r.mode.name(),
        r.summary.iterations,
        r.summary.final_objective,
        if r.summary.calibration_converged { "converged" } else { "stopped at max iterations" }
    );
    s
}
