//! Position-dependent feedforward `u_ff = d²/dt²(θ₁(ρ)·r + θ₂(ρ)·r̈)` and its
//! kernel-regularized estimation from closed-loop experiment data.
//!
//! Both parameter functions are kernel expansions over a fixed grid of
//! centers, `θᵢ(ρ) = Σₘ αᵢ[m]·κᵢ(ρ, cₘ)`. The double time derivative is always
//! applied to the whole product, after the position-dependent weighting, using
//! the same three-point stencil for regression and synthesis.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::{
    lambda_ladder, normal_equation_residual, ridge_solve, select_lambda, GramFactor, KernelSpec,
    KernelTerm, Regularizer,
};
use crate::trajectory::Trajectory;

/// Samples dropped at each end of a log before regression.
pub const TRIM: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct FFModel {
    pub centers: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub spec1: KernelSpec,
    pub spec2: KernelSpec,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Regularization weight the coefficients were fitted with.
    pub lambda: f64,
}

impl FFModel {
    /// Model with all coefficients zero.
    pub fn zero(
        centers: Vec<f64>,
        spec1: KernelSpec,
        spec2: KernelSpec,
        rho_min: f64,
        rho_max: f64,
    ) -> Self {
        let m = centers.len();
        Self {
            centers,
            alpha1: vec![0.0; m],
            alpha2: vec![0.0; m],
            spec1,
            spec2,
            rho_min,
            rho_max,
            lambda: 1.0,
        }
    }

    pub fn num_centers(&self) -> usize {
        self.centers.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.centers.len();
        if m == 0 {
            return Err(Error::InvalidArgument("model has no centers".into()));
        }
        if self.alpha1.len() != m || self.alpha2.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{m} centers but {} / {} coefficients",
                self.alpha1.len(),
                self.alpha2.len()
            )));
        }
        if !(self.rho_min.is_finite() && self.rho_max.is_finite() && self.rho_min < self.rho_max) {
            return Err(Error::InvalidArgument(format!(
                "invalid model domain [{}, {}]",
                self.rho_min, self.rho_max
            )));
        }
        if self.centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "centers must be strictly increasing".into(),
            ));
        }
        for &c in &self.centers {
            if !(c >= self.rho_min && c <= self.rho_max) {
                return Err(Error::Domain {
                    rho: c,
                    min: self.rho_min,
                    max: self.rho_max,
                });
            }
        }
        let coeffs = self.alpha1.iter().chain(&self.alpha2);
        if coeffs
            .chain(std::iter::once(&self.lambda))
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "non-finite model coefficient".into(),
            ));
        }
        self.spec1.validate()?;
        self.spec2.validate()
    }

    /// `(θ₁(ρ), θ₂(ρ))`
    pub fn evaluate(&self, rho: f64) -> Result<(f64, f64)> {
        if !(rho >= self.rho_min && rho <= self.rho_max) {
            return Err(Error::Domain {
                rho,
                min: self.rho_min,
                max: self.rho_max,
            });
        }
        let mut theta1 = 0.0;
        let mut theta2 = 0.0;
        for (m, &c) in self.centers.iter().enumerate() {
            theta1 += self.alpha1[m] * self.spec1.eval(rho, c);
            theta2 += self.alpha2[m] * self.spec2.eval(rho, c);
        }
        Ok((theta1, theta2))
    }

    /// Plain-text serialization; floats use the shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "lpvff-model 1");
        let _ = writeln!(out, "centers {}", self.centers.len());
        let _ = writeln!(out, "domain {:e} {:e}", self.rho_min, self.rho_max);
        let _ = writeln!(out, "lambda {:e}", self.lambda);
        for (name, spec) in [("kernel1", &self.spec1), ("kernel2", &self.spec2)] {
            let _ = writeln!(out, "{name} {}", spec.terms.len());
            for t in &spec.terms {
                let _ = match *t {
                    KernelTerm::SquaredExponential {
                        variance,
                        length_scale,
                    } => writeln!(
                        out,
                        "term squared_exponential {variance:e} {length_scale:e}"
                    ),
                    KernelTerm::Periodic {
                        variance,
                        length_scale,
                        period_freq,
                    } => writeln!(
                        out,
                        "term periodic {variance:e} {length_scale:e} {period_freq:e}"
                    ),
                    KernelTerm::Constant { variance } => {
                        writeln!(out, "term constant {variance:e}")
                    }
                };
            }
        }
        let _ = writeln!(out, "data center alpha1 alpha2");
        for m in 0..self.centers.len() {
            let _ = writeln!(
                out,
                "{:e} {:e} {:e}",
                self.centers[m], self.alpha1[m], self.alpha2[m]
            );
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut last_line = 0;
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            match lines.next() {
                Some((n, l)) => {
                    last_line = n;
                    Ok((n, l.split_whitespace().collect()))
                }
                None => Err(Error::Parse {
                    line: last_line + 1,
                    message: format!("unexpected end of file, expected {what}"),
                }),
            }
        };
        let parse_f64 = |line: usize, tok: &str| -> Result<f64> {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{tok}` is not a number"),
            })
        };
        let expect = |line: usize, toks: &[&str], key: &str, n: usize| -> Result<()> {
            if toks.first() != Some(&key) || toks.len() != n + 1 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected `{key}` followed by {n} value(s)"),
                });
            }
            Ok(())
        };

        let (n, toks) = next("header")?;
        if toks != ["lpvff-model", "1"] {
            return Err(Error::Parse {
                line: n,
                message: "expected header `lpvff-model 1`".into(),
            });
        }
        let (n, toks) = next("centers")?;
        expect(n, &toks, "centers", 1)?;
        let m: usize = toks[1].parse().map_err(|_| Error::Parse {
            line: n,
            message: format!("`{}` is not a count", toks[1]),
        })?;
        let (n, toks) = next("domain")?;
        expect(n, &toks, "domain", 2)?;
        let (rho_min, rho_max) = (parse_f64(n, toks[1])?, parse_f64(n, toks[2])?);
        let (n, toks) = next("lambda")?;
        expect(n, &toks, "lambda", 1)?;
        let lambda = parse_f64(n, toks[1])?;

        let mut specs = Vec::with_capacity(2);
        for key in ["kernel1", "kernel2"] {
            let (n, toks) = next(key)?;
            expect(n, &toks, key, 1)?;
            let count: usize = toks[1].parse().map_err(|_| Error::Parse {
                line: n,
                message: format!("`{}` is not a count", toks[1]),
            })?;
            let mut terms = Vec::with_capacity(count);
            for _ in 0..count {
                let (n, toks) = next("kernel term")?;
                let term = match toks.as_slice() {
                    ["term", "squared_exponential", v, l] => KernelTerm::SquaredExponential {
                        variance: parse_f64(n, v)?,
                        length_scale: parse_f64(n, l)?,
                    },
                    ["term", "periodic", v, l, w] => KernelTerm::Periodic {
                        variance: parse_f64(n, v)?,
                        length_scale: parse_f64(n, l)?,
                        period_freq: parse_f64(n, w)?,
                    },
                    ["term", "constant", v] => KernelTerm::Constant {
                        variance: parse_f64(n, v)?,
                    },
                    _ => {
                        return Err(Error::Parse {
                            line: n,
                            message: "malformed kernel term".into(),
                        })
                    }
                };
                terms.push(term);
            }
            let spec = KernelSpec { terms };
            spec.validate().map_err(|e| Error::Parse {
                line: n,
                message: e.to_string(),
            })?;
            specs.push(spec);
        }
        let (n, toks) = next("data")?;
        if toks.first() != Some(&"data") {
            return Err(Error::Parse {
                line: n,
                message: "expected `data` section".into(),
            });
        }
        let mut centers = Vec::with_capacity(m);
        let mut alpha1 = Vec::with_capacity(m);
        let mut alpha2 = Vec::with_capacity(m);
        for _ in 0..m {
            let (n, toks) = next("data row")?;
            if toks.len() != 3 {
                return Err(Error::Parse {
                    line: n,
                    message: format!("expected 3 columns, found {}", toks.len()),
                });
            }
            centers.push(parse_f64(n, toks[0])?);
            alpha1.push(parse_f64(n, toks[1])?);
            alpha2.push(parse_f64(n, toks[2])?);
        }
        if let Some((n, _)) = lines.next() {
            return Err(Error::Parse {
                line: n,
                message: format!("trailing content after {m} data rows"),
            });
        }
        let spec2 = specs.pop().expect("two kernels parsed");
        let spec1 = specs.pop().expect("two kernels parsed");
        let model = FFModel {
            centers,
            alpha1,
            alpha2,
            spec1,
            spec2,
            rho_min,
            rho_max,
            lambda,
        };
        model.validate().map_err(|e| Error::Parse {
            line: last_line,
            message: e.to_string(),
        })?;
        Ok(model)
    }
}

/// `M` centers spread uniformly over `[rho_min, rho_max]`; a single center sits
/// at the midpoint.
pub fn uniform_centers(m: usize, rho_min: f64, rho_max: f64) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.5 * (rho_min + rho_max)],
        _ => (0..m)
            .map(|i| {
                if i == m - 1 {
                    rho_max
                } else {
                    rho_min + (rho_max - rho_min) * i as f64 / (m - 1) as f64
                }
            })
            .collect(),
    }
}

/// Data from one tracking experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentLog {
    pub dt: f64,
    /// Total plant input associated with each sample instant.
    pub u_total: Vec<f64>,
    /// Measured carriage position.
    pub y: Vec<f64>,
    /// Scheduling variable ρ at which the kernels are evaluated.
    pub rho: Vec<f64>,
    pub trajectory: Trajectory,
}

impl ExperimentLog {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if self.u_total.len() != n || self.rho.len() != n || self.trajectory.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "log lengths differ: u {} y {} rho {} trajectory {}",
                self.u_total.len(),
                n,
                self.rho.len(),
                self.trajectory.len()
            )));
        }
        if (self.dt - self.trajectory.dt).abs() > 1e-15 * self.dt.abs() {
            return Err(Error::InvalidArgument(
                "log and trajectory sample periods differ".into(),
            ));
        }
        let all = self.u_total.iter().chain(&self.y).chain(&self.rho);
        if all.clone().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "log contains non-finite samples".into(),
            ));
        }
        self.trajectory.validate()
    }

    /// Tracking error r0 − y.
    pub fn tracking_error(&self) -> Vec<f64> {
        self.trajectory
            .position
            .iter()
            .zip(&self.y)
            .map(|(r, y)| r - y)
            .collect()
    }
}

/// Three-point second difference `(v[k−1] − 2v[k] + v[k+1])/dt²`; the two end
/// samples copy their interior neighbour.
pub fn second_difference(v: &[f64], dt: f64) -> Vec<f64> {
    let n = v.len();
    let mut out = vec![0.0; n];
    if n < 3 {
        return out;
    }
    let inv = 1.0 / (dt * dt);
    for k in 1..n - 1 {
        out[k] = (v[k - 1] - 2.0 * v[k] + v[k + 1]) * inv;
    }
    out[0] = out[1];
    out[n - 1] = out[n - 2];
    out
}

/// Zero-phase Gaussian smoothing with standard deviation `sigma` seconds,
/// truncated at 4σ, ends padded by replication.
pub fn gaussian_smooth(v: &[f64], dt: f64, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 || v.is_empty() {
        return v.to_vec();
    }
    let s = sigma / dt;
    let half = (4.0 * s).ceil() as isize;
    let weights: Vec<f64> = (-half..=half)
        .map(|j| (-0.5 * (j as f64 / s).powi(2)).exp())
        .collect();
    let norm: f64 = weights.iter().sum();
    let n = v.len() as isize;
    (0..n)
        .map(|k| {
            weights
                .iter()
                .zip(-half..=half)
                .map(|(w, j)| w * v[(k + j).clamp(0, n - 1) as usize])
                .sum::<f64>()
                / norm
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Regression {
    /// N'×2M; columns 0..M drive θ₁, M..2M drive θ₂.
    pub phi: DMatrix<f64>,
    pub target: DVector<f64>,
}

/// Regression of the logged input onto kernel-weighted reference signals:
/// column j is d²/dt²[κ₁(ρ, cⱼ)·r0], column M+j is d²/dt²[κ₂(ρ, cⱼ)·r2].
pub fn build_regression(
    log: &ExperimentLog,
    centers: &[f64],
    spec1: &KernelSpec,
    spec2: &KernelSpec,
) -> Result<Regression> {
    log.validate()?;
    let n = log.len();
    if n < 2 * TRIM + 1 {
        return Err(Error::InvalidArgument(format!(
            "log has {n} samples, need at least {}",
            2 * TRIM + 1
        )));
    }
    let m = centers.len();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "at least one center required".into(),
        ));
    }
    let rows = n - 2 * TRIM;
    let traj = &log.trajectory;
    let mut phi = DMatrix::zeros(rows, 2 * m);
    let mut product = vec![0.0; n];
    for (block, spec, signal) in [(0, spec1, &traj.position), (1, spec2, &traj.acceleration)] {
        for (j, &c) in centers.iter().enumerate() {
            for k in 0..n {
                product[k] = spec.eval(log.rho[k], c) * signal[k];
            }
            let d2 = second_difference(&product, log.dt);
            phi.column_mut(block * m + j)
                .copy_from_slice(&d2[TRIM..n - TRIM]);
        }
    }
    let target = DVector::from_column_slice(&log.u_total[TRIM..n - TRIM]);
    Ok(Regression { phi, target })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    pub spec1: KernelSpec,
    pub spec2: KernelSpec,
    pub num_centers: usize,
    pub lambda: f64,
    /// Choose λ from the decade ladder by held-out residual.
    pub lambda_grid: bool,
    /// Gaussian smoothing (s) applied to the tracking error before it is
    /// differentiated for the target correction. Zero disables it.
    pub error_smoothing: f64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            spec1: KernelSpec::constant(1e-4),
            spec2: KernelSpec {
                terms: vec![
                    KernelTerm::SquaredExponential {
                        variance: 1e-14,
                        length_scale: 0.15,
                    },
                    KernelTerm::Periodic {
                        variance: 1e-14,
                        length_scale: 1.0,
                        period_freq: 5.0,
                    },
                ],
            },
            num_centers: 25,
            lambda: 1e-8,
            lambda_grid: false,
            error_smoothing: 1e-3,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_centers == 0 {
            return Err(Error::param("kernels.num_centers", 0.0, "must be >= 1"));
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::param("kernels.lambda", self.lambda, "must be > 0"));
        }
        if !(self.error_smoothing.is_finite() && self.error_smoothing >= 0.0) {
            return Err(Error::param(
                "learning.error_smoothing",
                self.error_smoothing,
                "must be >= 0",
            ));
        }
        self.spec1.validate()?;
        self.spec2.validate()
    }

    /// Position-independent counterpart: one center, κ ≡ 1 for both
    /// parameters, same λ.
    pub fn position_independent(&self) -> Self {
        Self {
            spec1: KernelSpec::constant(1.0),
            spec2: KernelSpec::constant(1.0),
            num_centers: 1,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnOutcome {
    pub model: FFModel,
    /// RMS of the regression residual on the (trimmed) training target.
    pub train_rms: f64,
    pub lambda: f64,
    /// Relative residual of the normal equations at the returned solution.
    pub normal_residual: f64,
}

/// Fits θ₁(ρ), θ₂(ρ) to one experiment.
///
/// Unknowns are the parameter-function values at the centers, `f = G·α`, with
/// penalty `λ·fᵀG⁻¹f` per function, i.e. a Gaussian prior whose covariance is
/// the kernel. When `previous` is the model that generated the experiment's
/// feedforward, the target is corrected by that model's inverse applied to the
/// measured tracking error, so the fit targets the input that would have
/// produced the reference rather than the measured output.
pub fn learn(
    log: &ExperimentLog,
    cfg: &LearnConfig,
    rho_min: f64,
    rho_max: f64,
    previous: Option<&FFModel>,
) -> Result<LearnOutcome> {
    cfg.validate()?;
    let centers = uniform_centers(cfg.num_centers, rho_min, rho_max);
    let m = centers.len();
    let Regression { phi, mut target } = build_regression(log, &centers, &cfg.spec1, &cfg.spec2)?;

    let span = rho_max - rho_min;
    let covered = log.rho.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - log.rho.iter().cloned().fold(f64::INFINITY, f64::min);
    if covered < 0.5 * span {
        log::warn!("experiment covers rho range {covered:.3}, less than half the domain {span:.3}");
    }

    if let Some(prev) = previous {
        let correction = inverse_of_error(prev, log, cfg.error_smoothing)?;
        let n = log.len();
        for (t, c) in target.iter_mut().zip(&correction[TRIM..n - TRIM]) {
            *t += c;
        }
    }

    let g1 = GramFactor::new(&cfg.spec1, &centers)?;
    let g2 = GramFactor::new(&cfg.spec2, &centers)?;
    // regressors for the center values: Φ_f = Φ_α·G⁻¹ (G symmetric)
    let mut phi_f = DMatrix::zeros(phi.nrows(), 2 * m);
    for (block, g) in [(0usize, &g1), (1, &g2)] {
        let cols = phi.columns(block * m, m).into_owned();
        let solved = g.solve(&cols.transpose()).transpose();
        phi_f.columns_mut(block * m, m).copy_from(&solved);
    }
    let reg = Regularizer::InverseGram(vec![g1.clone(), g2.clone()]);

    let lambda = if cfg.lambda_grid {
        select_lambda(&phi_f, &target, &reg, &lambda_ladder())?.lambda
    } else {
        cfg.lambda
    };
    let values = ridge_solve(&phi_f, &target, &reg, lambda)?;
    let normal_residual = normal_equation_residual(&phi_f, &target, &reg, lambda, &values);

    let to_alpha = |g: &GramFactor, f: DVector<f64>| -> Vec<f64> {
        g.solve(&DMatrix::from_column_slice(m, 1, f.as_slice()))
            .column(0)
            .iter()
            .copied()
            .collect()
    };
    let alpha1 = to_alpha(&g1, values.rows(0, m).into_owned());
    let alpha2 = to_alpha(&g2, values.rows(m, m).into_owned());
    let mut coeffs = alpha1.clone();
    coeffs.extend_from_slice(&alpha2);
    let residual = &target - &phi * DVector::from_vec(coeffs);
    let train_rms = (residual.norm_squared() / residual.len() as f64).sqrt();

    let model = FFModel {
        centers,
        alpha1,
        alpha2,
        spec1: cfg.spec1.clone(),
        spec2: cfg.spec2.clone(),
        rho_min,
        rho_max,
        lambda,
    };
    model.validate()?;
    Ok(LearnOutcome {
        model,
        train_rms,
        lambda,
        normal_residual,
    })
}

/// d²/dt²[θ₁(ρ)·e + θ₂(ρ)·ë] for the log's (smoothed) tracking error.
fn inverse_of_error(model: &FFModel, log: &ExperimentLog, smoothing: f64) -> Result<Vec<f64>> {
    let e = gaussian_smooth(&log.tracking_error(), log.dt, smoothing);
    let e_dd = second_difference(&e, log.dt);
    let mut z = Vec::with_capacity(e.len());
    for k in 0..e.len() {
        let (t1, t2) = model.evaluate(log.rho[k])?;
        z.push(t1 * e[k] + t2 * e_dd[k]);
    }
    Ok(second_difference(&z, log.dt))
}

/// Feedforward samples for `traj` scheduled on `rho` (usually r0/ℓ).
pub fn synthesize_ff(model: &FFModel, traj: &Trajectory, rho: &[f64]) -> Result<Vec<f64>> {
    if rho.len() != traj.len() {
        return Err(Error::DimensionMismatch(format!(
            "rho schedule has {} samples, trajectory {}",
            rho.len(),
            traj.len()
        )));
    }
    let mut v = Vec::with_capacity(traj.len());
    for (k, &r) in rho.iter().enumerate() {
        let (t1, t2) = model.evaluate(r)?;
        v.push(t1 * traj.position[k] + t2 * traj.acceleration[k]);
    }
    Ok(second_difference(&v, traj.dt))
}
