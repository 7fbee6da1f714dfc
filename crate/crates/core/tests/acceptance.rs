//! Acceptance checks: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::time::Instant;

use lpv_feedforward::evaluation::{theta2_relative_rms, ControllerParams, MeasurementNoise};
use lpv_feedforward::kernel::{add_jitter, ridge_solve, GramFactor, Regularizer};
use lpv_feedforward::learning::{uniform_centers, LearnConfig};
use lpv_feedforward::pipeline::{learn_iteratively, reproduce_table, Scenario, TrajectoryParams};
use lpv_feedforward::plant::{Plant, PlantParams, PlantState, SimOptions};
use lpv_feedforward::trajectory::{profile, Trajectory};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ITERATIONS: usize = 6;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn default_scenario() -> Scenario {
    Scenario::new(
        PlantParams::default(),
        ControllerParams::default(),
        &TrajectoryParams::default(),
        MeasurementNoise::default(),
    )
    .expect("default scenario")
}

fn table_ratios() -> Outcome {
    let start = Instant::now();
    let report = reproduce_table(&default_scenario(), &LearnConfig::default(), ITERATIONS)
        .expect("pipeline");
    let secs = start.elapsed().as_secs_f64();
    let dev = &report.rows[1];
    Outcome {
        pass: dev.e_max <= 0.1 && dev.e_2 <= 0.1 && secs < 60.0,
        detail: format!(
            "normalized e_max {:.4} (<= 0.1), e_2 {:.4} (<= 0.1), runtime {secs:.2} s (< 60)",
            dev.e_max, dev.e_2
        ),
    }
}

fn figure3_match() -> Outcome {
    let report = learn_iteratively(&default_scenario(), &LearnConfig::default(), ITERATIONS)
        .expect("pipeline");
    let err =
        theta2_relative_rms(&report.model, &PlantParams::default(), 0.2, 0.8, 61).expect("grid");
    Outcome {
        pass: err <= 0.05,
        detail: format!(
            "relative RMS error of theta2 over [0.2, 0.8]: {:.4} (<= 0.05)",
            err
        ),
    }
}

fn coefficient_match() -> Outcome {
    let mut worst = 0.0_f64;
    for (damping, rho) in [(5.0, 0.5), (0.0, 0.3), (0.5, 0.8)] {
        let p = PlantParams {
            damping,
            ..PlantParams::default()
        };
        let k = p.stiffness(rho).expect("in domain");
        let tf = Plant::with_frozen_stiffness(p, k)
            .expect("plant")
            .frozen_transfer_function()
            .expect("frozen");
        // (mJ s⁴ + d(J+mr²) s³ + k(J+mr²) s²) y = r(d s + k) u, made monic
        let (m, j, r, d) = (p.mass, p.inertia, p.pulley_radius, p.damping);
        let total = j + m * r * r;
        let want_num = [r * k / (m * j), r * d / (m * j), 0.0];
        let want_den = [0.0, 0.0, k * total / (m * j), d * total / (m * j), 1.0];
        let omega = want_den[2].sqrt();
        for (got, want) in [(&tf.num[..], &want_num[..]), (&tf.den[..], &want_den[..])] {
            if got.len() != want.len() {
                return Outcome {
                    pass: false,
                    detail: format!(
                        "polynomial degree mismatch: {} vs {}",
                        got.len(),
                        want.len()
                    ),
                };
            }
            let scaled = |c: &[f64]| -> Vec<f64> {
                c.iter()
                    .enumerate()
                    .map(|(i, v)| v * omega.powi(i as i32 - 4))
                    .collect()
            };
            let (g, w) = (scaled(got), scaled(want));
            let scale = w.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            for (a, b) in g.iter().zip(&w) {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("max relative coefficient mismatch {worst:.2e} (<= 1e-12)"),
    }
}

fn rk4_order() -> Outcome {
    let p = PlantParams {
        damping: 0.0,
        ..PlantParams::default()
    };
    let plant = Plant::new(p).expect("plant");
    let mut s0 = PlantState::equilibrium(0.5, &p);
    s0.phi += 1e-3 / p.pulley_radius;
    let run = |dt: f64| -> f64 {
        let n = (0.1 / dt).round() as usize;
        plant
            .simulate(s0, &vec![0.01; n], dt, &SimOptions::default())
            .expect("simulate")
            .last()
            .expect("nonempty")
            .y
    };
    let reference = run(1e-4 / 16.0);
    let ratio = (run(2e-4) - reference).abs() / (run(1e-4) - reference).abs();
    Outcome {
        pass: (10.0..=22.0).contains(&ratio),
        detail: format!("error ratio for dt 2e-4 -> 1e-4: {ratio:.2} (in [10, 22])"),
    }
}

fn energy_drift() -> Outcome {
    let p = PlantParams {
        damping: 0.0,
        ..PlantParams::default()
    };
    let plant = Plant::with_frozen_stiffness(p, p.stiffness(0.5).expect("k")).expect("plant");
    let mut s = PlantState::equilibrium(0.5, &p);
    s.phi += 1e-3 / p.pulley_radius;
    let e0 = plant.energy(&s).expect("energy");
    let drift = plant
        .simulate(s, &vec![0.0; 10_000], 1e-4, &SimOptions::default())
        .expect("simulate")
        .iter()
        .map(|x| (plant.energy(x).expect("energy") - e0).abs() / e0)
        .fold(0.0, f64::max);
    Outcome {
        pass: drift < 1e-6,
        detail: format!("max relative energy drift over 1 s: {drift:.2e} (< 1e-6)"),
    }
}

/// Explicit normal equations solved by Gaussian elimination with pivoting.
#[allow(clippy::needless_range_loop)]
fn brute_force(phi: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> Vec<f64> {
    let p = phi.ncols();
    let mut a = vec![vec![0.0; p + 1]; p];
    for i in 0..p {
        for j in 0..p {
            a[i][j] = (0..phi.nrows())
                .map(|k| phi[(k, i)] * phi[(k, j)])
                .sum::<f64>();
        }
        a[i][i] += lambda;
        a[i][p] = (0..phi.nrows()).map(|k| phi[(k, i)] * y[k]).sum();
    }
    for col in 0..p {
        let piv = (col..p)
            .max_by(|&x, &z| a[x][col].abs().total_cmp(&a[z][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for row in col + 1..p {
            let f = a[row][col] / a[col][col];
            for k in col..=p {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; p];
    for row in (0..p).rev() {
        let s: f64 = (row + 1..p).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][p] - s) / a[row][row];
    }
    x
}

fn solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let phi = DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(5, |_, _| rng.random_range(-1.0..1.0));
        let lambda = 10f64.powf(rng.random_range(-4.0..1.0));
        let c = ridge_solve(&phi, &y, &Regularizer::identity(3), lambda).expect("solve");
        let want = brute_force(&phi, &y, lambda);
        let scale = want.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for (a, b) in c.iter().zip(&want) {
            worst = worst.max((a - b).abs() / scale);
        }
    }
    let cfg = LearnConfig::default();
    let base = cfg.position_independent();
    let centers = uniform_centers(cfg.num_centers, 0.1, 0.9);
    let mut psd = true;
    let mut min_ratio = f64::INFINITY;
    for (spec, c) in [
        (&cfg.spec1, &centers),
        (&cfg.spec2, &centers),
        (&base.spec1, &vec![0.5]),
    ] {
        let mut g = spec.gram(c);
        add_jitter(&mut g);
        let trace = g.trace();
        let min = SymmetricEigen::new(g)
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        min_ratio = min_ratio.min(min / trace);
        psd &= min >= -1e-10 * trace && GramFactor::new(spec, c).is_ok();
    }
    Outcome {
        pass: worst <= 1e-10 && psd,
        detail: format!(
            "max relative deviation from brute force {worst:.2e} (<= 1e-10); Gram PSD after jitter: {psd} (min eig/trace {min_ratio:.2e})"
        ),
    }
}

fn degeneracy() -> Outcome {
    let p = PlantParams::default();
    let k = p.stiffness(0.5).expect("k");
    let scn = Scenario {
        plant: Plant::with_frozen_stiffness(p, k).expect("plant"),
        ..default_scenario()
    };
    let cfg = LearnConfig::default().position_independent();
    let model = learn_iteratively(&scn, &cfg, ITERATIONS)
        .expect("pipeline")
        .model;
    let (t1, t2) = model.evaluate(0.5).expect("evaluate");
    let e1 = (t1 / p.theta1() - 1.0).abs();
    let e2 = (t2 / p.theta2_for_stiffness(k) - 1.0).abs();
    Outcome {
        pass: e1 <= 0.01 && e2 <= 0.01,
        detail: format!("relative error theta1 {e1:.2e}, theta2 {e2:.2e} (<= 1e-2)"),
    }
}

fn trajectory_endpoints() -> Outcome {
    let t = Trajectory::point_to_point(0.15, 0.85, 0.5, 1e-4, 0.5).expect("trajectory");
    let last = t.len() - 1;
    let mut worst = 0.0_f64;
    for col in [&t.velocity, &t.acceleration, &t.jerk, &t.snap] {
        let peak = col.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        worst = worst.max(col[0].abs() / peak).max(col[last].abs() / peak);
    }
    let mid = (profile(0.5)[0] - 0.5).abs();
    Outcome {
        pass: worst <= 1e-12 && mid <= f64::EPSILON,
        detail: format!(
            "max endpoint derivative / peak {worst:.2e} (<= 1e-12); |p(0.5) - 0.5| = {mid:.1e}"
        ),
    }
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("tracking ratios", table_ratios),
        ("theta2 match", figure3_match),
        ("io coefficient match", coefficient_match),
        ("rk4 self-convergence", rk4_order),
        ("energy conservation", energy_drift),
        ("ridge solver oracle", solver_oracle),
        ("position-independent degeneracy", degeneracy),
        ("trajectory endpoints", trajectory_endpoints),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
