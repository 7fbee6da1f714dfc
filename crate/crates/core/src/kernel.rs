//! Position kernels, Gram matrices and the kernel-regularized least-squares
//! solver.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative diagonal jitter added to every Gram matrix before factorization.
pub const GRAM_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelTerm {
    /// σ²·exp(−(a−b)²/(2λ²))
    SquaredExponential { variance: f64, length_scale: f64 },
    /// σ²·exp(−2·sin²(ω(a−b)/2)/λ²)
    Periodic {
        variance: f64,
        length_scale: f64,
        period_freq: f64,
    },
    /// σ², independent of position.
    Constant { variance: f64 },
}

impl KernelTerm {
    pub fn variance(&self) -> f64 {
        match *self {
            KernelTerm::SquaredExponential { variance, .. }
            | KernelTerm::Periodic { variance, .. }
            | KernelTerm::Constant { variance } => variance,
        }
    }

    fn eval(&self, a: f64, b: f64) -> f64 {
        let d = a - b;
        match *self {
            KernelTerm::SquaredExponential {
                variance,
                length_scale,
            } => variance * (-d * d / (2.0 * length_scale * length_scale)).exp(),
            KernelTerm::Periodic {
                variance,
                length_scale,
                period_freq,
            } => {
                let s = (0.5 * period_freq * d).sin();
                variance * (-2.0 * s * s / (length_scale * length_scale)).exp()
            }
            KernelTerm::Constant { variance } => variance,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(name, v, "must be finite and > 0"))
            }
        };
        match *self {
            KernelTerm::SquaredExponential {
                variance,
                length_scale,
            } => {
                positive("variance", variance)?;
                positive("length_scale", length_scale)
            }
            KernelTerm::Periodic {
                variance,
                length_scale,
                period_freq,
            } => {
                positive("variance", variance)?;
                positive("length_scale", length_scale)?;
                positive("period_freq", period_freq)
            }
            KernelTerm::Constant { variance } => positive("variance", variance),
        }
    }
}

/// Sum of kernel terms defining the prior on one parameter function of ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelSpec {
    pub terms: Vec<KernelTerm>,
}

impl KernelSpec {
    pub fn new(terms: Vec<KernelTerm>) -> Result<Self> {
        let spec = Self { terms };
        spec.validate()?;
        Ok(spec)
    }

    pub fn constant(variance: f64) -> Self {
        Self {
            terms: vec![KernelTerm::Constant { variance }],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.terms.is_empty() {
            return Err(Error::InvalidArgument(
                "kernel needs at least one term".into(),
            ));
        }
        self.terms.iter().try_for_each(KernelTerm::validate)
    }

    pub fn eval(&self, a: f64, b: f64) -> f64 {
        self.terms.iter().map(|t| t.eval(a, b)).sum()
    }

    /// κ(a, a), the total prior variance.
    pub fn total_variance(&self) -> f64 {
        self.terms.iter().map(KernelTerm::variance).sum()
    }

    pub fn gram(&self, centers: &[f64]) -> DMatrix<f64> {
        let m = centers.len();
        let mut g = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = self.eval(centers[i], centers[j]);
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }

    /// Cross-kernel matrix `K[i][j] = κ(points[i], centers[j])`.
    pub fn cross(&self, points: &[f64], centers: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(points.len(), centers.len(), |i, j| {
            self.eval(points[i], centers[j])
        })
    }
}

/// Adds `GRAM_JITTER · mean(diag)` to the diagonal.
pub fn add_jitter(g: &mut DMatrix<f64>) {
    let n = g.nrows();
    if n == 0 {
        return;
    }
    let mean = g.diagonal().sum() / n as f64;
    for i in 0..n {
        g[(i, i)] += GRAM_JITTER * mean;
    }
}

/// Cholesky factor of a jittered Gram matrix.
#[derive(Debug, Clone)]
pub struct GramFactor {
    chol: Cholesky<f64, Dyn>,
}

impl GramFactor {
    pub fn new(spec: &KernelSpec, centers: &[f64]) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidArgument(
                "at least one center required".into(),
            ));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite kernel center".into()));
        }
        let mut g = spec.gram(centers);
        add_jitter(&mut g);
        Self::from_matrix(g)
    }

    pub fn from_matrix(g: DMatrix<f64>) -> Result<Self> {
        let n = g.nrows();
        Cholesky::new(g).map(|chol| Self { chol }).ok_or_else(|| {
            Error::Factorization(format!("{n}x{n} Gram matrix is not positive definite"))
        })
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    /// Lower-triangular factor L with G = L·Lᵀ.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// G⁻¹·b via two triangular solves.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }
}

/// Penalty matrix R in `‖y − Φc‖² + λ·cᵀRc`.
#[derive(Debug, Clone)]
pub enum Regularizer {
    /// Explicit symmetric positive-definite R.
    Dense(DMatrix<f64>),
    /// R = blockdiag(G₁⁻¹, G₂⁻¹, …), applied through the Gram factors.
    InverseGram(Vec<GramFactor>),
}

impl Regularizer {
    pub fn identity(p: usize) -> Self {
        Regularizer::Dense(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        match self {
            Regularizer::Dense(r) => r.nrows(),
            Regularizer::InverseGram(blocks) => blocks.iter().map(GramFactor::dim).sum(),
        }
    }

    /// R·c
    pub fn apply(&self, c: &DVector<f64>) -> DVector<f64> {
        match self {
            Regularizer::Dense(r) => r * c,
            Regularizer::InverseGram(blocks) => {
                let mut out = DVector::zeros(c.len());
                let mut offset = 0;
                for b in blocks {
                    let m = b.dim();
                    let seg = DMatrix::from_column_slice(m, 1, c.rows(offset, m).as_slice());
                    out.rows_mut(offset, m).copy_from(&b.solve(&seg).column(0));
                    offset += m;
                }
                out
            }
        }
    }

    /// blockdiag(L₁, L₂, …) for the inverse-Gram form.
    fn block_factor(blocks: &[GramFactor]) -> DMatrix<f64> {
        let p: usize = blocks.iter().map(GramFactor::dim).sum();
        let mut out = DMatrix::zeros(p, p);
        let mut offset = 0;
        for b in blocks {
            let m = b.dim();
            out.view_mut((offset, offset), (m, m)).copy_from(&b.l());
            offset += m;
        }
        out
    }
}

fn check_dims(phi: &DMatrix<f64>, y: &DVector<f64>, reg: &Regularizer, lambda: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "regularization weight must be > 0, got {lambda}"
        )));
    }
    if phi.nrows() == 0 || phi.ncols() == 0 {
        return Err(Error::DimensionMismatch("empty regression matrix".into()));
    }
    if phi.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "regression matrix has {} rows but target has {}",
            phi.nrows(),
            y.len()
        )));
    }
    if reg.dim() != phi.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "regularizer is {}x{} but regression has {} columns",
            reg.dim(),
            reg.dim(),
            phi.ncols()
        )));
    }
    Ok(())
}

/// Minimizes `‖y − Φc‖² + λ·cᵀRc`, i.e. solves `(ΦᵀΦ + λR)c = Φᵀy`.
///
/// For the inverse-Gram penalty the problem is solved in whitened
/// coordinates `c = L·β`, which turns the penalty into `λ‖β‖²` and never forms
/// a Gram inverse.
pub fn ridge_solve(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: &Regularizer,
    lambda: f64,
) -> Result<DVector<f64>> {
    check_dims(phi, y, reg, lambda)?;
    match reg {
        Regularizer::Dense(r) => {
            let a = phi.tr_mul(phi) + r * lambda;
            let rhs = phi.tr_mul(y);
            let chol = Cholesky::new(a).ok_or_else(|| {
                Error::Factorization("normal matrix is not positive definite".into())
            })?;
            Ok(chol.solve(&rhs))
        }
        Regularizer::InverseGram(blocks) => {
            let l = Regularizer::block_factor(blocks);
            let whitened = phi * &l;
            let p = whitened.ncols();
            let a = whitened.tr_mul(&whitened) + DMatrix::identity(p, p) * lambda;
            let rhs = whitened.tr_mul(y);
            let chol = Cholesky::new(a).ok_or_else(|| {
                Error::Factorization("whitened normal matrix is not positive definite".into())
            })?;
            Ok(l * chol.solve(&rhs))
        }
    }
}

/// `‖(ΦᵀΦ + λR)c − Φᵀy‖ / ‖Φᵀy‖`
pub fn normal_equation_residual(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: &Regularizer,
    lambda: f64,
    c: &DVector<f64>,
) -> f64 {
    let rhs = phi.tr_mul(y);
    let lhs = phi.tr_mul(&(phi * c)) + reg.apply(c) * lambda;
    let scale = rhs.norm();
    if scale == 0.0 {
        lhs.norm()
    } else {
        (lhs - rhs).norm() / scale
    }
}

/// `‖y − Φc‖² + λ·cᵀRc`
pub fn ridge_objective(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: &Regularizer,
    lambda: f64,
    c: &DVector<f64>,
) -> f64 {
    (y - phi * c).norm_squared() + lambda * c.dot(&reg.apply(c))
}

/// Every `HOLDOUT_STRIDE`-th regression row is held out during λ selection.
pub const HOLDOUT_STRIDE: usize = 5;

/// Decade ladder 1e-8 … 1e2.
pub fn lambda_ladder() -> Vec<f64> {
    (-8..=2).map(|e| 10f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaChoice {
    pub lambda: f64,
    pub holdout_rms: f64,
    /// (λ, held-out RMS) for every rung that could be solved.
    pub scores: Vec<(f64, f64)>,
}

/// Picks the λ with smallest held-out RMS residual; ties go to the smaller λ.
pub fn select_lambda(
    phi: &DMatrix<f64>,
    y: &DVector<f64>,
    reg: &Regularizer,
    ladder: &[f64],
) -> Result<LambdaChoice> {
    let n = phi.nrows();
    let (train, test): (Vec<usize>, Vec<usize>) =
        (0..n).partition(|i| i % HOLDOUT_STRIDE != HOLDOUT_STRIDE - 1);
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument(
            "too few rows for a held-out split".into(),
        ));
    }
    let phi_train = phi.select_rows(&train);
    let y_train = y.select_rows(&train);
    let phi_test = phi.select_rows(&test);
    let y_test = y.select_rows(&test);

    let mut best: Option<(f64, f64)> = None;
    let mut scores = Vec::with_capacity(ladder.len());
    let mut last_err = None;
    for &lambda in ladder {
        match ridge_solve(&phi_train, &y_train, reg, lambda) {
            Ok(c) => {
                let rms = ((&y_test - &phi_test * c).norm_squared() / test.len() as f64).sqrt();
                scores.push((lambda, rms));
                if rms.is_finite() && best.is_none_or(|(_, b)| rms < b) {
                    best = Some((lambda, rms));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some((lambda, holdout_rms)) => Ok(LambdaChoice {
            lambda,
            holdout_rms,
            scores,
        }),
        None => {
            Err(last_err.unwrap_or_else(|| Error::InvalidArgument("empty lambda ladder".into())))
        }
    }
}
