//! TOML run configuration. Every section and key is optional; unknown keys
//! are rejected.
//!
//! ```toml
//! output_dir = "out"
//! seed = 0
//!
//! [plant]
//! damping = 5.0
//!
//! [controller]
//! kp = 5.0
//! kd = 0.1
//!
//! [trajectory]
//! y_start = 0.15
//! y_end = 0.85
//!
//! [kernels]
//! num_centers = 25
//! lambda = 1e-8
//! spec1 = [{ family = "constant", variance = 1e-4 }]
//! spec2 = [
//!     { family = "squared_exponential", variance = 1e-14, length_scale = 0.15 },
//!     { family = "periodic", variance = 1e-14, length_scale = 1.0, period_freq = 5.0 },
//! ]
//!
//! [learning]
//! iterations = 6
//!
//! [evaluation]
//! baseline = "fitted"
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::evaluation::{ControllerParams, MeasurementNoise};
use crate::kernel::KernelSpec;
use crate::learning::LearnConfig;
use crate::pipeline::{Scenario, TrajectoryParams};
use crate::plant::PlantParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelsConfig {
    pub num_centers: usize,
    pub lambda: f64,
    /// Pick λ from the decade ladder 1e-8…1e2 by held-out residual.
    pub lambda_grid: bool,
    pub spec1: KernelSpec,
    pub spec2: KernelSpec,
}

impl Default for KernelsConfig {
    fn default() -> Self {
        let l = LearnConfig::default();
        Self {
            num_centers: l.num_centers,
            lambda: l.lambda,
            lambda_grid: l.lambda_grid,
            spec1: l.spec1,
            spec2: l.spec2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningSection {
    /// Experiment/learn rounds.
    pub iterations: usize,
    /// Gaussian smoothing (s) of the tracking error used in the target
    /// correction.
    pub error_smoothing: f64,
    /// Position measurement noise standard deviation (m).
    pub noise_std: f64,
}

impl Default for LearningSection {
    fn default() -> Self {
        Self {
            iterations: 6,
            error_smoothing: LearnConfig::default().error_smoothing,
            noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Fitted position-independent feedforward.
    #[default]
    Fitted,
    /// No feedforward.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    pub baseline: BaselineKind,
    /// Grid size of the θ₂ comparison export.
    pub figure3_points: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            baseline: BaselineKind::Fitted,
            figure3_points: 61,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    /// Seed of the measurement-noise generator.
    pub seed: u64,
    pub plant: PlantParams,
    pub controller: ControllerParams,
    pub trajectory: TrajectoryParams,
    pub kernels: KernelsConfig,
    pub learning: LearningSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            seed: 0,
            plant: PlantParams::default(),
            controller: ControllerParams::default(),
            trajectory: TrajectoryParams::default(),
            kernels: KernelsConfig::default(),
            learning: LearningSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

/// Configuration problem, with the source line when it can be located.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(p) = &self.path {
            write!(f, "{}", p.display())?;
            if let Some(l) = self.line {
                write!(f, ":{l}")?;
            }
            write!(f, ": ")?;
        } else if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            line: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text).map_err(|e| ConfigError {
            path: Some(path.to_path_buf()),
            ..e
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError {
            path: None,
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate().map_err(|(key, message)| ConfigError {
            path: None,
            line: key.and_then(|k| locate_key(text, k)),
            message,
        })?;
        Ok(cfg)
    }

    /// Effective configuration with all defaults filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks every nested invariant; on failure returns the dotted key (if
    /// known) and a message.
    pub fn validate(&self) -> Result<(), (Option<&'static str>, String)> {
        let named = |e: Error| -> (Option<&'static str>, String) {
            match &e {
                Error::InvalidParameter { name, .. } if name.contains('.') => {
                    (Some(*name), e.to_string())
                }
                _ => (None, e.to_string()),
            }
        };
        self.plant.validate().map_err(named)?;
        self.controller.validate().map_err(named)?;
        self.validate_trajectory()?;
        if let Err(e) = self.kernels.spec1.validate() {
            return Err((Some("kernels.spec1"), format!("kernels.spec1: {e}")));
        }
        if let Err(e) = self.kernels.spec2.validate() {
            return Err((Some("kernels.spec2"), format!("kernels.spec2: {e}")));
        }
        self.learn_config().validate().map_err(named)?;
        if self.learning.iterations == 0 {
            return Err((
                Some("learning.iterations"),
                "learning.iterations must be >= 1".into(),
            ));
        }
        if !(self.learning.noise_std.is_finite() && self.learning.noise_std >= 0.0) {
            return Err((
                Some("learning.noise_std"),
                format!(
                    "learning.noise_std = {} must be >= 0",
                    self.learning.noise_std
                ),
            ));
        }
        if self.evaluation.figure3_points < 2 {
            return Err((
                Some("evaluation.figure3_points"),
                "evaluation.figure3_points must be >= 2".into(),
            ));
        }
        Ok(())
    }

    fn validate_trajectory(&self) -> Result<(), (Option<&'static str>, String)> {
        let t = &self.trajectory;
        let p = &self.plant;
        let check = |ok: bool, key: &'static str, value: f64, reason: String| {
            if ok {
                Ok(())
            } else {
                Err((Some(key), format!("{key} = {value}: {reason}")))
            }
        };
        check(
            t.dt.is_finite() && t.dt > 0.0,
            "trajectory.dt",
            t.dt,
            "must be > 0".into(),
        )?;
        check(
            t.duration.is_finite() && t.duration > 0.0,
            "trajectory.duration",
            t.duration,
            "must be > 0".into(),
        )?;
        check(
            t.t_total.is_finite() && t.t_total >= t.duration,
            "trajectory.t_total",
            t.t_total,
            format!("must be >= trajectory.duration = {}", t.duration),
        )?;
        for (key, y) in [
            ("trajectory.y_start", t.y_start),
            ("trajectory.y_end", t.y_end),
        ] {
            let rho = y / p.ell;
            check(
                rho >= p.rho_min && rho <= p.rho_max,
                key,
                y,
                format!(
                    "rho = {rho} outside plant domain [{}, {}]",
                    p.rho_min, p.rho_max
                ),
            )?;
        }
        Ok(())
    }

    pub fn learn_config(&self) -> LearnConfig {
        LearnConfig {
            spec1: self.kernels.spec1.clone(),
            spec2: self.kernels.spec2.clone(),
            num_centers: self.kernels.num_centers,
            lambda: self.kernels.lambda,
            lambda_grid: self.kernels.lambda_grid,
            error_smoothing: self.learning.error_smoothing,
        }
    }

    pub fn noise(&self) -> MeasurementNoise {
        MeasurementNoise {
            std: self.learning.noise_std,
            seed: self.seed,
        }
    }

    pub fn scenario(&self) -> crate::Result<Scenario> {
        Scenario::new(self.plant, self.controller, &self.trajectory, self.noise())
    }
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// 1-based line of `section.key` in TOML source, if written there.
fn locate_key(text: &str, dotted: &str) -> Option<usize> {
    let (section, key) = dotted.split_once('.')?;
    let mut current = "";
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim_matches(['[', ']']).trim();
            continue;
        }
        let Some((lhs, _)) = line.split_once('=') else {
            continue;
        };
        let lhs = lhs.trim();
        if (current == section && lhs == key) || (current.is_empty() && lhs == dotted) {
            return Some(i + 1);
        }
    }
    None
}
