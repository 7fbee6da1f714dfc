//! `lpvff` command line: `simulate`, `learn`, `evaluate`.
//!
//! Exit codes: 0 ok, 2 configuration or model-file error, 3 runtime error
//! (instability, domain violation), 4 solver failure, 5 model/config mismatch.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::{BaselineKind, ConfigError, RunConfig};
use crate::error::Error;
use crate::evaluation::{figure3_csv, figure3_data, table_csv, table_text};
use crate::learning::FFModel;
use crate::pipeline::{compare_models, learn_iteratively};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;

/// Environment variable overriding the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "LPVFF_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "lpvff",
    version,
    about = "Position-dependent feedforward for a belt drive"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-loop run without feedforward; writes the traces.
    Simulate(Common),
    /// Iterative learning; writes the model and the θ₂ comparison.
    Learn {
        #[command(flatten)]
        common: Common,
        /// Choose λ from the decade ladder by held-out residual.
        #[arg(long)]
        lambda_grid: bool,
    },
    /// Compares a learned model with the baseline; writes the table and traces.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Model file written by `learn`.
        #[arg(long)]
        model: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration; defaults are used for anything not given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the configuration).
    #[arg(long, env = OUTPUT_DIR_ENV)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure {
            code: EXIT_CONFIG,
            message: format!("config error: {e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::Factorization(_) => EXIT_SOLVER,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: format!("error: {e}"),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: format!("error: cannot write {}: {e}", path.display()),
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Simulate(common) => simulate(&common),
        Command::Learn {
            common,
            lambda_grid,
        } => learn(&common, lambda_grid),
        Command::Evaluate { common, model } => evaluate(&common, &model),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            eprintln!("{}", f.message);
            f.code
        }
    }
}

fn load(common: &Common) -> Result<(RunConfig, PathBuf), Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    write(&dir.join("effective_config.toml"), &cfg.to_toml())?;
    Ok((cfg, dir))
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| io_failure(path, e))
}

fn simulate(common: &Common) -> Result<(), Failure> {
    let (cfg, dir) = load(common)?;
    let scn = cfg.scenario()?;
    let run = scn.run(None, 0)?;
    write(&dir.join("trajectory.csv"), &scn.trajectory.to_csv())?;
    write(&dir.join("traces.csv"), &run.to_csv())?;
    println!("e_max  {:.6e} m", run.e_max);
    println!("e_2    {:.6e} m*sqrt(s)", run.e_2norm);
    Ok(())
}

fn learn(common: &Common, lambda_grid: bool) -> Result<(), Failure> {
    let (mut cfg, dir) = load(common)?;
    cfg.kernels.lambda_grid |= lambda_grid;
    let scn = cfg.scenario()?;
    let report = learn_iteratively(&scn, &cfg.learn_config(), cfg.learning.iterations)?;
    let model = &report.model;
    write(&dir.join("model.txt"), &model.to_text())?;
    let rows = figure3_data(model, &cfg.plant, cfg.evaluation.figure3_points)?;
    write(&dir.join("figure3.csv"), &figure3_csv(&rows))?;
    for (i, it) in report.iterations.iter().enumerate() {
        println!(
            "iteration {:>2}: e_max {:.4e} m  e_2 {:.4e}  train rms {:.4e}",
            i + 1,
            it.e_max,
            it.e_2norm,
            it.train_rms
        );
    }
    let last = report.iterations.last().expect("at least one iteration");
    println!("training residual rms {:.6e}", last.train_rms);
    if cfg.kernels.lambda_grid {
        println!("chosen lambda {:e}", last.lambda);
    }
    Ok(())
}

fn evaluate(common: &Common, model_path: &Path) -> Result<(), Failure> {
    let (cfg, dir) = load(common)?;
    let text = fs::read_to_string(model_path).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("model error: cannot read {}: {e}", model_path.display()),
    })?;
    let model = FFModel::from_text(&text).map_err(|e| Failure {
        code: EXIT_CONFIG,
        message: format!("model error: {}: {e}", model_path.display()),
    })?;
    check_compatible(&model, &cfg)?;
    let scn = cfg.scenario()?;
    let learn_cfg = cfg.learn_config();
    let baseline = match cfg.evaluation.baseline {
        BaselineKind::Fitted => Some((&learn_cfg, cfg.learning.iterations)),
        BaselineKind::None => None,
    };
    let report = compare_models(&scn, model, baseline)?;
    let table = table_text(&report.rows);
    print!("{table}");
    write(&dir.join("table.txt"), &table)?;
    write(&dir.join("table.csv"), &table_csv(&report.rows))?;
    write(&dir.join("traces_baseline.csv"), &report.baseline.to_csv())?;
    write(
        &dir.join("traces_developed.csv"),
        &report.developed.to_csv(),
    )?;
    Ok(())
}

/// The model must live inside the plant's domain and cover the reference.
fn check_compatible(model: &FFModel, cfg: &RunConfig) -> Result<(), Failure> {
    let p = &cfg.plant;
    let mismatch = |message: String| Failure {
        code: EXIT_MISMATCH,
        message: format!("model/config mismatch: {message}"),
    };
    if let Some(c) = model.centers.iter().find(|&&c| !p.contains(c)) {
        return Err(mismatch(format!(
            "model center {c} outside plant domain [{}, {}]",
            p.rho_min, p.rho_max
        )));
    }
    let t = &cfg.trajectory;
    for y in [t.y_start, t.y_end] {
        let rho = y / p.ell;
        if rho < model.rho_min || rho > model.rho_max {
            return Err(mismatch(format!(
                "reference rho {rho} outside model domain [{}, {}]",
                model.rho_min, model.rho_max
            )));
        }
    }
    Ok(())
}
