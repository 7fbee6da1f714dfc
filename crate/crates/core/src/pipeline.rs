//! End-to-end scenario: repeated closed-loop experiments with learning in
//! between, and the baseline-versus-developed comparison.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{
    compare_table, run_closed_loop, ControllerParams, MeasurementNoise, TableRow, TrackingResult,
};
use crate::learning::{learn, FFModel, LearnConfig};
use crate::plant::{Plant, PlantParams};
use crate::trajectory::Trajectory;

/// Point-to-point reference settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryParams {
    /// Start position (m).
    pub y_start: f64,
    /// End position (m).
    pub y_end: f64,
    /// Move duration (s).
    pub duration: f64,
    /// Sample period (s).
    pub dt: f64,
    /// Experiment length including the settle phase (s).
    pub t_total: f64,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        Self {
            y_start: 0.15,
            y_end: 0.85,
            duration: 0.5,
            dt: 1e-4,
            t_total: 0.7,
        }
    }
}

impl TrajectoryParams {
    pub fn build(&self) -> Result<Trajectory> {
        Trajectory::point_to_point(
            self.y_start,
            self.y_end,
            self.duration,
            self.dt,
            self.t_total,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: Plant,
    pub controller: ControllerParams,
    pub trajectory: Trajectory,
    /// Measurement noise; experiment `i` uses seed `noise.seed + i`.
    pub noise: MeasurementNoise,
}

impl Scenario {
    pub fn new(
        plant: PlantParams,
        controller: ControllerParams,
        trajectory: &TrajectoryParams,
        noise: MeasurementNoise,
    ) -> Result<Self> {
        let plant = Plant::new(plant)?;
        controller.validate()?;
        let trajectory = trajectory.build()?;
        trajectory.check_domain(plant.params())?;
        Ok(Self {
            plant,
            controller,
            trajectory,
            noise,
        })
    }

    /// Closed-loop run of experiment number `index` with the given model.
    pub fn run(&self, model: Option<&FFModel>, index: u64) -> Result<TrackingResult> {
        let noise = MeasurementNoise {
            seed: self.noise.seed.wrapping_add(index),
            ..self.noise
        };
        run_closed_loop(
            &self.trajectory,
            model,
            &self.controller,
            &self.plant,
            &noise,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// Tracking of the experiment the model was learned from.
    pub e_max: f64,
    pub e_2norm: f64,
    pub train_rms: f64,
    pub lambda: f64,
    pub normal_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearningReport {
    pub model: FFModel,
    pub iterations: Vec<IterationRecord>,
}

/// `iterations` rounds of experiment → learn. The first experiment runs
/// without feedforward; each later one uses the previous model, which also
/// corrects the learning target.
pub fn learn_iteratively(
    scn: &Scenario,
    cfg: &LearnConfig,
    iterations: usize,
) -> Result<LearningReport> {
    if iterations == 0 {
        return Err(Error::param("learning.iterations", 0.0, "must be >= 1"));
    }
    let params = scn.plant.params();
    let mut model: Option<FFModel> = None;
    let mut records = Vec::with_capacity(iterations);
    for it in 0..iterations {
        let run = scn.run(model.as_ref(), it as u64)?;
        let log = run.to_log(&scn.trajectory, params.ell)?;
        let out = learn(&log, cfg, params.rho_min, params.rho_max, model.as_ref())?;
        log::info!(
            "iteration {}: e_max {:.3e} m, train rms {:.3e}, lambda {:e}",
            it + 1,
            run.e_max,
            out.train_rms,
            out.lambda
        );
        records.push(IterationRecord {
            e_max: run.e_max,
            e_2norm: run.e_2norm,
            train_rms: out.train_rms,
            lambda: out.lambda,
            normal_residual: out.normal_residual,
        });
        model = Some(out.model);
    }
    Ok(LearningReport {
        model: model.expect("at least one iteration"),
        iterations: records,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableReport {
    pub baseline_model: Option<FFModel>,
    pub developed_model: FFModel,
    pub baseline: TrackingResult,
    pub developed: TrackingResult,
    pub rows: Vec<TableRow>,
}

/// Evaluates `developed` against either a fitted position-independent
/// baseline (learned with the same settings but one center and κ ≡ 1) or, if
/// `baseline_cfg` is `None`, against no feedforward at all.
pub fn compare_models(
    scn: &Scenario,
    developed: FFModel,
    baseline_cfg: Option<(&LearnConfig, usize)>,
) -> Result<TableReport> {
    let baseline_model = match baseline_cfg {
        Some((cfg, iterations)) => {
            Some(learn_iteratively(scn, &cfg.position_independent(), iterations)?.model)
        }
        None => None,
    };
    // evaluation runs use their own noise stream, after the learning ones
    let eval_index = u64::MAX / 2;
    let baseline = scn.run(baseline_model.as_ref(), eval_index)?;
    let developed_run = scn.run(Some(&developed), eval_index)?;
    let rows = compare_table(&baseline, &developed_run)?;
    Ok(TableReport {
        baseline_model,
        developed_model: developed,
        baseline,
        developed: developed_run,
        rows,
    })
}

/// Learns the position-dependent model and compares it with the fitted
/// position-independent baseline.
pub fn reproduce_table(
    scn: &Scenario,
    cfg: &LearnConfig,
    iterations: usize,
) -> Result<TableReport> {
    let developed = learn_iteratively(scn, cfg, iterations)?.model;
    compare_models(scn, developed, Some((cfg, iterations)))
}
