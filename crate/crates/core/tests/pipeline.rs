use lpv_feedforward::evaluation::{grid, ControllerParams, MeasurementNoise};
use lpv_feedforward::learning::{uniform_centers, FFModel, LearnConfig};
use lpv_feedforward::pipeline::{
    compare_models, learn_iteratively, reproduce_table, Scenario, TrajectoryParams,
};
use lpv_feedforward::plant::{Plant, PlantParams};

const ITERATIONS: usize = 6;

fn scenario(noise: MeasurementNoise) -> Scenario {
    Scenario::new(
        PlantParams::default(),
        ControllerParams::default(),
        &TrajectoryParams::default(),
        noise,
    )
    .unwrap()
}

fn theta2_on_grid(model: &FFModel) -> Vec<f64> {
    grid(0.2, 0.8, 61)
        .into_iter()
        .map(|rho| model.evaluate(rho).unwrap().1)
        .collect()
}

fn rms(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (sum / n as f64).sqrt()
}

#[test]
fn learned_feedforward_beats_feedback_only() {
    let scn = scenario(MeasurementNoise::default());
    let model = learn_iteratively(&scn, &LearnConfig::default(), ITERATIONS)
        .unwrap()
        .model;
    let without = scn.run(None, 0).unwrap();
    let with = scn.run(Some(&model), 0).unwrap();
    assert!(with.e_max < without.e_max);
}

#[test]
fn table_reproduction_is_deterministic() {
    let scn = scenario(MeasurementNoise { std: 1e-6, seed: 5 });
    let a = reproduce_table(&scn, &LearnConfig::default(), 2).unwrap();
    let b = reproduce_table(&scn, &LearnConfig::default(), 2).unwrap();
    assert_eq!(a, b);
}

#[test]
fn doubling_proportional_gain_reduces_feedback_only_error() {
    let base = scenario(MeasurementNoise::default());
    let stiffer = Scenario {
        controller: ControllerParams {
            kp: 2.0 * base.controller.kp,
            ..base.controller
        },
        ..base.clone()
    };
    assert!(stiffer.run(None, 0).unwrap().e_max < base.run(None, 0).unwrap().e_max);
}

#[test]
fn measurement_noise_barely_moves_learned_theta2() {
    let cfg = LearnConfig::default();
    let clean = learn_iteratively(&scenario(MeasurementNoise::default()), &cfg, ITERATIONS)
        .unwrap()
        .model;
    let noisy = learn_iteratively(
        &scenario(MeasurementNoise {
            std: 1e-6,
            seed: 42,
        }),
        &cfg,
        ITERATIONS,
    )
    .unwrap()
    .model;
    let a = theta2_on_grid(&clean);
    let b = theta2_on_grid(&noisy);
    let perturbation = rms(a.iter().zip(&b).map(|(x, y)| x - y)) / rms(a.iter().copied());
    assert!(perturbation < 0.2, "relative perturbation {perturbation}");
}

#[test]
fn zero_model_against_no_feedforward_gives_unit_ratios() {
    let scn = scenario(MeasurementNoise::default());
    let cfg = LearnConfig::default();
    let zero = FFModel::zero(
        uniform_centers(25, 0.1, 0.9),
        cfg.spec1,
        cfg.spec2,
        0.1,
        0.9,
    );
    let report = compare_models(&scn, zero, None).unwrap();
    assert!((report.rows[1].e_max - 1.0).abs() < 1e-12);
    assert!((report.rows[1].e_2 - 1.0).abs() < 1e-12);
}

#[test]
fn constant_stiffness_recovers_position_independent_parameters() {
    let params = PlantParams::default();
    let k = params.stiffness(0.5).unwrap();
    let scn = Scenario {
        plant: Plant::with_frozen_stiffness(params, k).unwrap(),
        ..scenario(MeasurementNoise::default())
    };
    let cfg = LearnConfig::default().position_independent();
    let model = learn_iteratively(&scn, &cfg, ITERATIONS).unwrap().model;
    let (t1, t2) = model.evaluate(0.5).unwrap();
    assert!((t1 / params.theta1() - 1.0).abs() < 0.01, "theta1 {t1}");
    assert!(
        (t2 / params.theta2_for_stiffness(k) - 1.0).abs() < 0.01,
        "theta2 {t2}"
    );
}
