//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode, Stdio};
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kincal::calibration::{calibrate, CalibrationProblem};
use kincal::geom::{geodesic_distance_s3, quat_to_rotmat, rotmat_to_quat, se3_distance, Se3Metric};
use kincal::gp::GpModel;
use kincal::harness::experiment::{execute, identifiable_mask, random_pose_set};
use kincal::harness::{ExperimentConfig, Single};
use kincal::kernels::known_invalid::{counterexample_poses, k_naive_se3};
use kincal::kernels::{
    gram, min_eigenvalue, sym_eigenvalues, Kernel, ProductKernel, ProductKernelParams, S3Kernel, S3KernelParams,
    SeKernelParams, DEFAULT_TRUNCATION,
};
use kincal::kinematics::{
    identification_jacobian, identification_jacobian_with_step, DhChain, DhJoint, JointVector, ParamKind,
    JACOBIAN_STEP,
};
use kincal::{Pose, UnitQuaternion};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    random_pose_set(rng, 1).remove(0)
}

fn reference_eigenvalues() -> Outcome {
    let metric = Se3Metric::new(0.1, 0.9).unwrap();
    let poses = counterexample_poses();
    let mut worst: f64 = 0.0;
    let mut text = Vec::new();
    for (beta, reference) in [
        (12.0, [-0.0001, 0.0083, 0.0355, 3.9561]),
        (1.0, [0.4725, 0.6940, 1.1404, 1.6929]),
    ] {
        let k = |a: &Pose, b: &Pose| k_naive_se3(a, b, beta, &metric);
        let ev = sym_eigenvalues(&gram(&poses, &k));
        for (a, b) in ev.iter().zip(&reference) {
            worst = worst.max((a - b).abs());
        }
        text.push(format!("β={beta}: {:?}", ev.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()));
    }
    outcome(worst <= 1e-3, format!("{}; max error {worst:.2e}", text.join(" ")))
}

fn kernel_validity() -> Outcome {
    let mut worst = f64::INFINITY;
    for (i, kappa) in [0.1, 0.5, 1.0, 2.0].into_iter().enumerate() {
        let s3 = S3KernelParams::new(kappa, 1.0, DEFAULT_TRUNCATION).unwrap();
        let ks3 = S3Kernel::new(s3);
        let kp = ProductKernel::new(ProductKernelParams::new(s3, SeKernelParams::new(0.5, 1.0, 0.0).unwrap(), 1.0).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        for _ in 0..100 {
            let set = random_pose_set(&mut rng, 10);
            let qs: Vec<UnitQuaternion> = set.iter().map(|p| p.q).collect();
            worst = worst.min(min_eigenvalue(&gram(&qs, &ks3)));
            worst = worst.min(min_eigenvalue(&gram(&set, &kp)));
        }
    }
    let metric = Se3Metric::new(0.1, 0.9).unwrap();
    let naive = |a: &Pose, b: &Pose| k_naive_se3(a, b, 12.0, &metric);
    let mut rng = ChaCha8Rng::seed_from_u64(2000);
    let flagged = (0..100)
        .filter(|_| min_eigenvalue(&gram(&random_pose_set(&mut rng, 10), &naive)) < -1e-8)
        .count();
    outcome(
        worst >= -1e-8 && flagged > 0,
        format!("valid kernels min eigenvalue {worst:.3e}; naive kernel flagged on {flagged}/100 sets"),
    )
}

fn gp_exactness() -> Outcome {
    let params = ProductKernelParams::new(
        S3KernelParams::new(0.5, 1.0, DEFAULT_TRUNCATION).unwrap(),
        SeKernelParams::new(0.7, 1.0, 0.0).unwrap(),
        1.3,
    )
    .unwrap();
    let kernel = ProductKernel::new(params);
    let mut rng = ChaCha8Rng::seed_from_u64(3000);
    let mut worst_oracle: f64 = 0.0;
    let mut worst_interp: f64 = 0.0;
    for _ in 0..20 {
        let xs: Vec<Pose> = (0..10).map(|_| random_pose(&mut rng)).collect();
        let ys: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..0.0)).collect();
        let noise = 0.05;
        let prior = -0.2;
        let m = GpModel::new(params, noise, prior)
            .unwrap()
            .with_observations(xs.iter().copied().zip(ys.iter().copied()))
            .unwrap();
        let k = gram(&xs, &kernel) + DMatrix::identity(10, 10) * (noise * noise);
        let lu = k.lu();
        let centered = DVector::from_iterator(10, ys.iter().map(|y| y - prior));
        let weights = lu.solve(&centered).unwrap();
        for _ in 0..10 {
            let x = random_pose(&mut rng);
            let ks = DVector::from_iterator(10, xs.iter().map(|xi| kernel.eval(xi, &x)));
            let mean = prior + ks.dot(&weights);
            let var = kernel.eval(&x, &x) - ks.dot(&lu.solve(&ks).unwrap());
            let post = m.posterior(&x);
            worst_oracle = worst_oracle.max((post.mean - mean).abs()).max((post.raw_variance - var).abs());
        }
        let exact = GpModel::new(params, 0.0, prior)
            .unwrap()
            .with_observations(xs.iter().copied().zip(ys.iter().copied()))
            .unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            worst_interp = worst_interp.max((exact.posterior(x).mean - y).abs());
        }
    }
    outcome(
        worst_oracle <= 1e-10 && worst_interp <= 1e-8,
        format!("oracle gap {worst_oracle:.2e}; interpolation error {worst_interp:.2e}"),
    )
}

fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> DhChain {
    let joints = (0..n)
        .map(|_| {
            DhJoint::revolute(
                rng.random_range(-PI..PI),
                rng.random_range(-PI..PI),
                rng.random_range(-0.5..0.5),
                rng.random_range(-0.5..0.5),
            )
        })
        .collect();
    DhChain::new(joints, Pose::identity(), Pose::identity()).unwrap()
}

fn jacobian_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4000);
    let mut worst_halving: f64 = 0.0;
    for _ in 0..20 {
        let chain = random_chain(&mut rng, 7);
        let params = chain.params();
        let theta = chain.random_joints(&mut rng);
        let full = identification_jacobian_with_step(&chain, &params, &theta, JACOBIAN_STEP).unwrap();
        let half = identification_jacobian_with_step(&chain, &params, &theta, JACOBIAN_STEP / 2.0).unwrap();
        for (a, b) in full.iter().zip(half.iter()) {
            worst_halving = worst_halving.max((a - b).abs() / a.abs().max(1.0));
        }
    }
    let mut worst_analytic: f64 = 0.0;
    for _ in 0..50 {
        let chain = random_chain(&mut rng, 1);
        let params = chain.params();
        let theta = JointVector(vec![rng.random_range(-PI..PI)]);
        let j = identification_jacobian(&chain, &params, &theta).unwrap();
        let angle = params.get(ParamKind::Phi, 0) + theta.0[0];
        let ca = params.index_of(ParamKind::A, 0);
        let cd = params.index_of(ParamKind::D, 0);
        let expect_a = [0.0, 0.0, 0.0, 0.0, angle.cos(), angle.sin(), 0.0];
        let expect_d = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0];
        for r in 0..7 {
            worst_analytic = worst_analytic.max((j[(r, ca)] - expect_a[r]).abs());
            worst_analytic = worst_analytic.max((j[(r, cd)] - expect_d[r]).abs());
        }
    }
    outcome(
        worst_halving <= 1e-6 && worst_analytic <= 1e-9,
        format!("step-halving gap {worst_halving:.2e}; analytic column error {worst_analytic:.2e}"),
    )
}

fn noiseless_recovery() -> Outcome {
    let mut cfg = ExperimentConfig::shipped_default();
    cfg.noise.pos = 0.0;
    cfg.noise.rot = 0.0;
    cfg.noise.joint = 0.0;
    let exp = cfg.build().unwrap();
    let result = execute(&exp, Single::Bo, &cfg).unwrap();
    let mask = identifiable_mask(&exp).unwrap();
    let n_min = mask.min_measurements();
    let measurements = result.run.measurements;
    let problem = CalibrationProblem::new(
        exp.chain.clone(),
        exp.nominal.clone(),
        measurements.clone(),
        exp.bounds.clone(),
        mask.clone(),
    )
    .unwrap();
    let out = calibrate(&problem, &exp.calibration).unwrap();
    let worst = mask
        .indices()
        .into_iter()
        .map(|i| (out.correction.as_slice()[i] - exp.injected.as_slice()[i]).abs())
        .fold(0.0, f64::max);
    outcome(
        worst <= 1e-6 && measurements.len() >= n_min,
        format!(
            "{} BO poses (minimum {n_min}), {} of {} parameters identifiable, max error {worst:.2e}",
            measurements.len(),
            mask.count(),
            mask.len()
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn bo_versus_random() -> Outcome {
    let mut bo = Vec::new();
    let mut random = Vec::new();
    for seed in 0..10 {
        let mut cfg = ExperimentConfig::shipped_default();
        cfg.seed = seed;
        let exp = cfg.build().unwrap();
        bo.push(execute(&exp, Single::Bo, &cfg).unwrap().summary.final_objective.abs());
        random.push(execute(&exp, Single::Random, &cfg).unwrap().summary.final_objective.abs());
    }
    let (mb, mr) = (median(bo), median(random));
    outcome(mb <= mr, format!("median |final f|: BO {mb:.4e}, random {mr:.4e}"))
}

fn metric_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7000);
    let metric = Se3Metric::new(0.3, 0.7).unwrap();
    let mut symmetric = true;
    let mut worst_triangle = f64::NEG_INFINITY;
    let mut worst_round_trip: f64 = 0.0;
    for _ in 0..1000 {
        let a = random_pose(&mut rng);
        let b = random_pose(&mut rng);
        let c = random_pose(&mut rng);
        let (ab, ba) = (geodesic_distance_s3(&a.q, &b.q), geodesic_distance_s3(&b.q, &a.q));
        let (bc, ac) = (geodesic_distance_s3(&b.q, &c.q), geodesic_distance_s3(&a.q, &c.q));
        symmetric &= ab == ba;
        worst_triangle = worst_triangle.max(ac - (ab + bc));
        let (sab, sba) = (se3_distance(&a, &b, &metric), se3_distance(&b, &a, &metric));
        let (sbc, sac) = (se3_distance(&b, &c, &metric), se3_distance(&a, &c, &metric));
        symmetric &= sab == sba;
        worst_triangle = worst_triangle.max(sac - (sab + sbc));

        let back = rotmat_to_quat(&quat_to_rotmat(&a.q));
        worst_round_trip = worst_round_trip.max(geodesic_distance_s3(&a.q, &back));
        let r = quat_to_rotmat(&a.q);
        let r2 = quat_to_rotmat(&rotmat_to_quat(&r));
        worst_round_trip = worst_round_trip.max((r.matrix() - r2.matrix()).amax());
    }
    outcome(
        symmetric && worst_triangle <= 1e-12 && worst_round_trip <= 1e-9,
        format!("symmetric {symmetric}; triangle excess {worst_triangle:.2e}; round trip {worst_round_trip:.2e}"),
    )
}

fn stable_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#') && !l.contains("\"wall_time_s\""))
        .map(str::to_string)
        .collect()
}

fn run_cli(out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_kincal"))
        .args(["run", "--mode", "both", "--seed", "11", "--out"])
        .arg(out)
        .env_remove("KINCAL_SEED")
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    if !(run_cli(a.path()) && run_cli(b.path())) {
        return outcome(false, "kincal run failed");
    }
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| stable_lines(&a.path().join(n)) != stable_lines(&b.path().join(n)))
        .collect();
    outcome(
        differing.is_empty() && names.len() == 6,
        format!("{} files compared, differing: {differing:?}", names.len()),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 naive kernel reference eigenvalues", Duration::from_secs(1), reference_eigenvalues),
        ("2 kernel validity suite", Duration::from_secs(30), kernel_validity),
        ("3 GP exactness", Duration::from_secs(5), gp_exactness),
        ("4 Jacobian correctness", Duration::from_secs(5), jacobian_checks),
        ("5 noiseless recovery", Duration::from_secs(120), noiseless_recovery),
        ("6 BO vs random", Duration::from_secs(600), bo_versus_random),
        ("7 metric and rotation suite", Duration::from_secs(5), metric_suite),
        ("8 run determinism", Duration::from_secs(120), determinism),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let o = check();
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= budget;
        if !pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} ({:.2} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

