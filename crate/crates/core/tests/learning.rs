use lpv_feedforward::kernel::KernelSpec;
use lpv_feedforward::learning::{
    build_regression, learn, second_difference, synthesize_ff, uniform_centers, ExperimentLog,
    FFModel, LearnConfig, TRIM,
};
use lpv_feedforward::trajectory::Trajectory;

const THETA1: f64 = 2e-3;
const THETA2: f64 = 2.5e-8;

fn reference() -> Trajectory {
    Trajectory::point_to_point(0.15, 0.85, 0.5, 1e-4, 0.7).unwrap()
}

/// Log of a perfectly tracked reference whose input is the exact discrete
/// mass+snap feedforward with constant parameters.
fn synthetic_log(traj: &Trajectory) -> ExperimentLog {
    let v: Vec<f64> = (0..traj.len())
        .map(|k| THETA1 * traj.position[k] + THETA2 * traj.acceleration[k])
        .collect();
    ExperimentLog {
        dt: traj.dt,
        u_total: second_difference(&v, traj.dt),
        y: traj.position.clone(),
        rho: traj.position.clone(),
        trajectory: traj.clone(),
    }
}

fn constant_model(theta1: f64, theta2: f64) -> FFModel {
    let mut m = FFModel::zero(
        vec![0.5],
        KernelSpec::constant(1.0),
        KernelSpec::constant(1.0),
        0.1,
        0.9,
    );
    m.alpha1 = vec![theta1];
    m.alpha2 = vec![theta2];
    m
}

#[test]
fn position_independent_columns_approximate_acceleration_and_snap() {
    let traj = reference();
    let log = synthetic_log(&traj);
    let one = KernelSpec::constant(1.0);
    let reg = build_regression(&log, &[0.5], &one, &one).unwrap();
    let n = traj.len();
    assert_eq!(reg.phi.nrows(), n - 2 * TRIM);
    let peak_acc = traj
        .acceleration
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let peak_snap = traj.snap.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for row in 0..reg.phi.nrows() {
        let k = row + TRIM;
        assert!((reg.phi[(row, 0)] - traj.acceleration[k]).abs() < 1e-5 * peak_acc);
        let err = (reg.phi[(row, 1)] - traj.snap[k]).abs();
        assert!(
            err < 1e-3 * peak_snap,
            "row {row}: {err:e} vs peak {peak_snap:e}"
        );
    }
}

#[test]
fn zero_trajectory_gives_zero_regressors_and_feedforward() {
    let traj = Trajectory::constant(0.0, 50, 1e-3);
    let log = ExperimentLog {
        dt: 1e-3,
        u_total: vec![0.0; 50],
        y: vec![0.0; 50],
        rho: vec![0.5; 50],
        trajectory: traj.clone(),
    };
    let cfg = LearnConfig::default();
    let reg =
        build_regression(&log, &uniform_centers(5, 0.1, 0.9), &cfg.spec1, &cfg.spec2).unwrap();
    assert!(reg.phi.iter().all(|&v| v == 0.0));
    let u = synthesize_ff(&constant_model(1.0, 1.0), &traj, &[0.5; 50]).unwrap();
    assert!(u.iter().all(|&v| v == 0.0));
}

#[test]
fn synthesis_exact_on_quadratic_reference() {
    let dt = 1e-3;
    let a = 3.0;
    let n = 100;
    let position: Vec<f64> = (0..n)
        .map(|k| 0.2 + 0.5 * a * (k as f64 * dt).powi(2))
        .collect();
    let mut traj = Trajectory::constant(0.0, n, dt);
    traj.position = position;
    let u = synthesize_ff(&constant_model(0.7, 0.0), &traj, &vec![0.5; n]).unwrap();
    for v in u {
        assert!((v - 0.7 * a).abs() < 1e-9);
    }
}

#[test]
fn synthesis_approximates_commuting_limit() {
    let traj = reference();
    let rho = traj.position.clone();
    let u = synthesize_ff(&constant_model(THETA1, THETA2), &traj, &rho).unwrap();
    let exact: Vec<f64> = (0..traj.len())
        .map(|k| THETA1 * traj.acceleration[k] + THETA2 * traj.snap[k])
        .collect();
    let peak = exact.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for k in 1..traj.len() - 1 {
        assert!((u[k] - exact[k]).abs() < 1e-5 * peak);
    }
}

#[test]
fn learns_constant_parameters_from_synthetic_log() {
    let traj = reference();
    let log = synthetic_log(&traj);
    let out = learn(&log, &LearnConfig::default(), 0.1, 0.9, None).unwrap();
    assert!(out.normal_residual < 1e-8, "{}", out.normal_residual);
    for rho in uniform_centers(41, 0.15, 0.85) {
        let (t1, t2) = out.model.evaluate(rho).unwrap();
        assert!((t1 / THETA1 - 1.0).abs() < 0.01, "theta1({rho}) = {t1}");
        assert!((t2 / THETA2 - 1.0).abs() < 0.01, "theta2({rho}) = {t2}");
    }
}

#[test]
fn learned_model_reproduces_training_data() {
    let traj = reference();
    let log = synthetic_log(&traj);
    let out = learn(&log, &LearnConfig::default(), 0.1, 0.9, None).unwrap();
    // re-synthesized on the logged schedule, the model gives back the fitted
    // input up to the reported training residual
    let u = synthesize_ff(&out.model, &traj, &log.rho).unwrap();
    let n = traj.len();
    let sq: f64 = (TRIM..n - TRIM)
        .map(|k| (u[k] - log.u_total[k]).powi(2))
        .sum();
    let rms = (sq / (n - 2 * TRIM) as f64).sqrt();
    let peak = log.u_total.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    assert!(
        (rms - out.train_rms).abs() <= 1e-10 * peak,
        "{rms} vs {}",
        out.train_rms
    );
}

#[test]
fn extreme_regularization_shrinks_to_zero() {
    let traj = reference();
    let log = synthetic_log(&traj);
    let cfg = LearnConfig {
        lambda: 1e9,
        ..LearnConfig::default()
    };
    let out = learn(&log, &cfg, 0.1, 0.9, None).unwrap();
    for rho in [0.2, 0.5, 0.8] {
        let (t1, t2) = out.model.evaluate(rho).unwrap();
        assert!(
            t1.abs() < 1e-3 * THETA1 && t2.abs() < 1e-3 * THETA2,
            "{t1} {t2}"
        );
    }
}

#[test]
fn lambda_grid_picks_a_ladder_value() {
    let traj = reference();
    let log = synthetic_log(&traj);
    let cfg = LearnConfig {
        lambda_grid: true,
        ..LearnConfig::default()
    };
    let out = learn(&log, &cfg, 0.1, 0.9, None).unwrap();
    let exponent = out.lambda.log10();
    assert!((exponent - exponent.round()).abs() < 1e-12 && (-8.0..=2.0).contains(&exponent));
}

#[test]
fn evaluate_matches_naive_sum() {
    let cfg = LearnConfig::default();
    let centers = uniform_centers(7, 0.1, 0.9);
    let mut model = FFModel::zero(
        centers.clone(),
        cfg.spec1.clone(),
        cfg.spec2.clone(),
        0.1,
        0.9,
    );
    model.alpha1 = (0..7).map(|i| (i as f64).sin()).collect();
    model.alpha2 = (0..7).map(|i| (i as f64 * 0.3).cos()).collect();
    for rho in [0.1, 0.33, 0.5, 0.71, 0.9] {
        let (t1, t2) = model.evaluate(rho).unwrap();
        let mut n1 = 0.0;
        let mut n2 = 0.0;
        for (m, &c) in centers.iter().enumerate() {
            n1 += model.alpha1[m] * cfg.spec1.eval(rho, c);
            n2 += model.alpha2[m] * cfg.spec2.eval(rho, c);
        }
        assert!((t1 - n1).abs() <= 1e-12 * n1.abs().max(1e-300));
        assert!((t2 - n2).abs() <= 1e-12 * n2.abs().max(1e-300));
    }
}
