//! Closed-loop tracking experiments, error metrics and the comparison artifacts.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learning::{synthesize_ff, ExperimentLog, FFModel};
use crate::plant::{Plant, PlantParams, PlantState, SimOptions};
use crate::trajectory::Trajectory;

/// Instability is declared when |e| exceeds this multiple of the stroke.
pub const INSTABILITY_FACTOR: f64 = 10.0;
/// Stroke floor (m) for the instability threshold, so rest references have one.
pub const MIN_STROKE: f64 = 1e-3;

/// PD feedback on carriage position; the output is motor torque.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    /// Proportional gain (N·m/m).
    pub kp: f64,
    /// Derivative gain (N·m·s/m).
    pub kd: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self { kp: 5.0, kd: 0.1 }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.kp > 0.0) {
            return Err(Error::param("controller.kp", self.kp, "must be > 0"));
        }
        if !(self.kd.is_finite() && self.kd >= 0.0) {
            return Err(Error::param("controller.kd", self.kd, "must be >= 0"));
        }
        Ok(())
    }
}

/// Additive white Gaussian noise on the measured position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasurementNoise {
    /// Standard deviation (m); zero disables noise.
    pub std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    pub t: Vec<f64>,
    pub r0: Vec<f64>,
    /// Measured position (true position plus measurement noise).
    pub y: Vec<f64>,
    pub e: Vec<f64>,
    /// Feedforward held over each sample interval.
    pub u_ff: Vec<f64>,
    pub u_fb: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub dt: f64,
    pub e_max: f64,
    pub e_2norm: f64,
    pub traces: Traces,
}

/// max |e|
pub fn max_abs(e: &[f64]) -> f64 {
    e.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// sqrt(Σ e²·dt), a discretization of the continuous L2 norm.
pub fn l2_norm(e: &[f64], dt: f64) -> f64 {
    (e.iter().map(|v| v * v).sum::<f64>() * dt).sqrt()
}

impl TrackingResult {
    /// Turns the experiment into a learning log; the held input is re-aligned
    /// to the sample instants by averaging adjacent held values.
    ///
    /// The scheduling signal is the reference `r0/ℓ`: the regressors are
    /// second differences of kernel-weighted signals, so measurement noise in
    /// ρ would be amplified by 1/dt².
    pub fn to_log(&self, trajectory: &Trajectory, ell: f64) -> Result<ExperimentLog> {
        let tr = &self.traces;
        if trajectory.len() != tr.t.len() {
            return Err(Error::DimensionMismatch(format!(
                "trajectory has {} samples, traces {}",
                trajectory.len(),
                tr.t.len()
            )));
        }
        let held: Vec<f64> = tr.u_ff.iter().zip(&tr.u_fb).map(|(a, b)| a + b).collect();
        let mut u_total = Vec::with_capacity(held.len());
        if let Some(&first) = held.first() {
            u_total.push(first);
        }
        u_total.extend(held.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        Ok(ExperimentLog {
            dt: self.dt,
            u_total,
            y: tr.y.clone(),
            rho: trajectory.position.iter().map(|r| r / ell).collect(),
            trajectory: trajectory.clone(),
        })
    }

    pub fn to_csv(&self) -> String {
        let tr = &self.traces;
        let mut out = String::from("t,r0,y,e,u_ff,u_fb\n");
        for i in 0..tr.t.len() {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{:e},{:e}",
                tr.t[i], tr.r0[i], tr.y[i], tr.e[i], tr.u_ff[i], tr.u_fb[i]
            );
        }
        out
    }
}

/// Runs PD feedback plus optional feedforward around the plant.
///
/// At sample `i` the controller sees the (noisy) measured position, computes
/// `u = u_ff + kp·e + kd·(r1 − ẏ)` and holds it for one RK4 step. The
/// feedforward held over `[tᵢ, tᵢ₊₁)` is the mean of samples `i` and `i+1`.
pub fn run_closed_loop(
    traj: &Trajectory,
    model: Option<&FFModel>,
    ctrl: &ControllerParams,
    plant: &Plant,
    noise: &MeasurementNoise,
) -> Result<TrackingResult> {
    traj.validate()?;
    ctrl.validate()?;
    let params = plant.params();
    traj.check_domain(params)?;
    let n = traj.len();
    let dt = traj.dt;

    let ff = match model {
        Some(m) => {
            let rho: Vec<f64> = traj.position.iter().map(|y| y / params.ell).collect();
            synthesize_ff(m, traj, &rho)?
        }
        None => vec![0.0; n],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let normal = if noise.std > 0.0 {
        Some(Normal::new(0.0, noise.std).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };
    let limit = INSTABILITY_FACTOR * traj.stroke().max(MIN_STROKE);
    let opts = SimOptions::default();

    let mut tr = Traces {
        t: Vec::with_capacity(n),
        r0: traj.position.clone(),
        y: Vec::with_capacity(n),
        e: Vec::with_capacity(n),
        u_ff: Vec::with_capacity(n),
        u_fb: Vec::with_capacity(n),
    };
    let mut s = PlantState::equilibrium(traj.position[0], params);
    for i in 0..n {
        let y_meas = s.y + normal.map_or(0.0, |d| d.sample(&mut rng));
        let e = traj.position[i] - y_meas;
        if !e.is_finite() || e.abs() > limit {
            return Err(Error::Instability {
                step: i,
                error: e.abs(),
                limit,
            });
        }
        let u_fb = ctrl.kp * e + ctrl.kd * (traj.velocity[i] - s.y_dot);
        let u_ff = if i + 1 < n {
            0.5 * (ff[i] + ff[i + 1])
        } else {
            ff[i]
        };
        tr.t.push(traj.time(i));
        tr.y.push(y_meas);
        tr.e.push(e);
        tr.u_ff.push(u_ff);
        tr.u_fb.push(u_fb);
        if i + 1 < n {
            s = plant
                .rk4_step(&s, u_ff + u_fb, dt)
                .map_err(|err| err.at_step(i))?;
            if !s.is_finite() || s.max_abs() > opts.max_abs_state {
                return Err(Error::NonFiniteState {
                    step: i,
                    bound: opts.max_abs_state,
                });
            }
        }
    }
    Ok(TrackingResult {
        dt,
        e_max: max_abs(&tr.e),
        e_2norm: l2_norm(&tr.e, dt),
        traces: tr,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub e_max: f64,
    pub e_2: f64,
}

/// Two rows, "baseline" normalized to (1, 1) and "developed" as ratios.
pub fn compare_table(
    baseline: &TrackingResult,
    developed: &TrackingResult,
) -> Result<Vec<TableRow>> {
    if baseline.traces.t.len() != developed.traces.t.len() || baseline.dt != developed.dt {
        return Err(Error::DimensionMismatch(format!(
            "horizons differ: {} samples at dt={} vs {} at dt={}",
            baseline.traces.t.len(),
            baseline.dt,
            developed.traces.t.len(),
            developed.dt
        )));
    }
    if !(baseline.e_max > 0.0 && baseline.e_2norm > 0.0) {
        return Err(Error::InvalidArgument(
            "baseline tracking error is zero; ratios undefined".into(),
        ));
    }
    Ok(vec![
        TableRow {
            name: "baseline".into(),
            e_max: 1.0,
            e_2: 1.0,
        },
        TableRow {
            name: "developed".into(),
            e_max: developed.e_max / baseline.e_max,
            e_2: developed.e_2norm / baseline.e_2norm,
        },
    ])
}

pub fn table_text(rows: &[TableRow]) -> String {
    let mut out = format!("{:<12} {:>12} {:>12}\n", "", "e_max", "e_2");
    for r in rows {
        let _ = writeln!(out, "{:<12} {:>12.4} {:>12.4}", r.name, r.e_max, r.e_2);
    }
    out
}

pub fn table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("name,e_max,e_2\n");
    for r in rows {
        let _ = writeln!(out, "{},{:e},{:e}", r.name, r.e_max, r.e_2);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Figure3Row {
    pub rho: f64,
    pub theta2_learned: f64,
    pub theta2_true: f64,
}

/// Learned and true θ₂ on a uniform grid over the domain with 5% trimmed at
/// each end.
pub fn figure3_data(
    model: &FFModel,
    params: &PlantParams,
    n_grid: usize,
) -> Result<Vec<Figure3Row>> {
    if n_grid < 2 {
        return Err(Error::InvalidArgument(format!(
            "n_grid must be >= 2, got {n_grid}"
        )));
    }
    let span = params.rho_span();
    let lo = params.rho_min + 0.05 * span;
    let hi = params.rho_max - 0.05 * span;
    grid(lo, hi, n_grid)
        .into_iter()
        .map(|rho| {
            let (_, theta2_learned) = model.evaluate(rho)?;
            let (_, theta2_true) = params.true_parameters(rho)?;
            Ok(Figure3Row {
                rho,
                theta2_learned,
                theta2_true,
            })
        })
        .collect()
}

pub fn figure3_csv(rows: &[Figure3Row]) -> String {
    let mut out = String::from("rho,theta2_learned,theta2_true\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:e},{:e},{:e}",
            r.rho, r.theta2_learned, r.theta2_true
        );
    }
    out
}

/// `n` uniformly spaced points from `lo` to `hi` inclusive.
pub fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// ‖learned − truth‖ / ‖truth‖ over the learned θ₂ on `[lo, hi]` (`n` points).
pub fn theta2_relative_rms(
    model: &FFModel,
    params: &PlantParams,
    lo: f64,
    hi: f64,
    n: usize,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for rho in grid(lo, hi, n) {
        let (_, learned) = model.evaluate(rho)?;
        let (_, truth) = params.true_parameters(rho)?;
        num += (learned - truth).powi(2);
        den += truth * truth;
    }
    Ok((num / den).sqrt())
}
