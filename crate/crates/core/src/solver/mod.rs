//! Lasso self-regression, its exact (ℓ₁-minimal) limit, and the dual direction.
//!
//! For column `i` the solver minimizes `½‖x_i − X₋ᵢc‖² + λ‖c‖₁`. This has the
//! same minimizer as `‖x_i − X₋ᵢc‖² + 2λ‖c‖₁`; the `½` convention makes
//! `ν = (x_i − X₋ᵢc)/λ` the exact dual point of
//! `max ⟨x_i,ν⟩ − (λ/2)‖ν‖²  s.t.  ‖X₋ᵢᵀν‖∞ ≤ 1`.
//!
//! Every returned solution carries a certificate: the KKT residual
//! `max_j` of the stationarity violation and the duality gap between the
//! primal value and `⟨x_i,λν⟩ − ½‖λν‖²`.

mod admm;
mod exact;

pub use admm::{LassoSystem, TRUNCATION};
pub use exact::{exact_column, exact_column_with, EXACT_RESIDUAL};

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, SelfRepresentation};
use crate::error::{Error, Result};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LassoSettings {
    pub lambda: f64,
    #[serde(default = "default_tol")]
    pub tol_kkt: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rho")]
    pub admm_rho: f64,
}

fn default_tol() -> f64 {
    1e-8
}
fn default_iters() -> usize {
    10_000
}
fn default_rho() -> f64 {
    1.0
}

impl LassoSettings {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tol_kkt: default_tol(),
            max_iters: default_iters(),
            admm_rho: default_rho(),
        }
    }

    pub fn with_lambda(self, lambda: f64) -> Self {
        Self { lambda, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::BadParameter(format!("lambda must be > 0, got {}", self.lambda)));
        }
        if !(self.tol_kkt > 0.0) {
            return Err(Error::BadParameter(format!("tol_kkt must be > 0, got {}", self.tol_kkt)));
        }
        if self.max_iters == 0 {
            return Err(Error::BadParameter("max_iters must be >= 1".into()));
        }
        if !(self.admm_rho > 0.0) {
            return Err(Error::BadParameter(format!("admm_rho must be > 0, got {}", self.admm_rho)));
        }
        Ok(())
    }
}

/// ADMM state carried between solves of the same column at different λ.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub z: DVector<f64>,
    pub u: DVector<f64>,
}

/// Certified solution of one column's Lasso problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    pub index: usize,
    pub lambda: f64,
    /// Nonzero coefficients `(j, c_j)`, sorted by `j`, never containing `index`.
    /// Entries below `1e-8 · max|c|` are truncated to zero.
    pub coefficients: Vec<(usize, f64)>,
    /// Dual point `ν`, scaled into the feasible set `‖X₋ᵢᵀν‖∞ ≤ 1`.
    pub dual: DVector<f64>,
    pub primal_value: f64,
    /// `⟨x_i, λν⟩ − ½‖λν‖²`.
    pub dual_value: f64,
    pub kkt_residual: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl ColumnSolution {
    fn new(
        index: usize,
        lambda: f64,
        mut coefficients: Vec<(usize, f64)>,
        cert: admm::Certificate,
        iterations: usize,
        converged: bool,
    ) -> Self {
        let max = coefficients.iter().fold(0.0f64, |m, (_, c)| m.max(c.abs()));
        coefficients.retain(|&(j, c)| j != index && c != 0.0 && c.abs() >= TRUNCATION * max);
        Self {
            index,
            lambda,
            coefficients,
            dual: cert.nu,
            primal_value: cert.primal,
            dual_value: cert.dual,
            kkt_residual: cert.kkt,
            residual_norm: cert.residual_norm,
            iterations,
            converged,
        }
    }

    pub fn duality_gap(&self) -> f64 {
        self.primal_value - self.dual_value
    }

    pub fn l1_norm(&self) -> f64 {
        self.coefficients.iter().map(|(_, c)| c.abs()).sum()
    }

    pub fn is_trivial(&self) -> bool {
        self.coefficients.is_empty()
    }

    /// Dense length-`N` coefficient vector.
    pub fn dense(&self, n: usize) -> DVector<f64> {
        let mut v = DVector::zeros(n);
        for &(j, c) in &self.coefficients {
            v[j] = c;
        }
        v
    }

    fn into_result(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NoConvergence {
                iterations: self.iterations,
                residual: self.kkt_residual,
            })
        }
    }
}

/// Solves column `i`; fails with `NoConvergence` if the certificate is not
/// reached within `max_iters`.
pub fn lasso_column<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    i: usize,
    settings: &LassoSettings,
) -> Result<ColumnSolution> {
    settings.validate()?;
    let system = LassoSystem::new(x.as_ref(), settings.admm_rho)?;
    system.solve_column(i, settings, None)?.0.into_result()
}

/// Dual direction `ν(x_i)` and its objective `⟨x_i,ν⟩ − (λ/2)‖ν‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualDirection {
    pub nu: DVector<f64>,
    pub value: f64,
}

impl DualDirection {
    fn from_solution(sol: &ColumnSolution, x_i: &DVector<f64>) -> Self {
        let lambda = sol.lambda;
        let value = x_i.dot(&sol.dual) - 0.5 * lambda * sol.dual.norm_squared();
        Self {
            nu: sol.dual.clone(),
            value,
        }
    }
}

pub fn dual_direction<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    i: usize,
    lambda: f64,
) -> Result<DualDirection> {
    let settings = LassoSettings::new(lambda);
    let system = LassoSystem::new(x.as_ref(), settings.admm_rho)?;
    dual_direction_with(&system, i, &settings)
}

/// Dual direction using a prebuilt system and explicit solver settings.
pub fn dual_direction_with(
    system: &LassoSystem,
    i: usize,
    settings: &LassoSettings,
) -> Result<DualDirection> {
    let sol = system.solve_column(i, settings, None)?.0.into_result()?;
    Ok(DualDirection::from_solution(&sol, &system.matrix().column(i).clone_owned()))
}

/// Per-column outcome of a batch solve. Unconverged columns keep their best
/// iterate so downstream metrics can still be computed.
pub struct BatchSolve {
    pub solutions: Vec<ColumnSolution>,
    pub warm: Vec<WarmStart>,
}

impl BatchSolve {
    pub fn failures(&self) -> Vec<usize> {
        self.solutions
            .iter()
            .filter(|s| !s.converged)
            .map(|s| s.index)
            .collect()
    }

    pub fn representation<T: Real>(&self) -> Result<SelfRepresentation<T>> {
        let n = self.solutions.len();
        let columns = self
            .solutions
            .iter()
            .map(|s| s.coefficients.iter().map(|&(j, c)| (j, T::of(c))).collect())
            .collect();
        SelfRepresentation::from_columns(n, columns)
    }
}

/// Solves every column in parallel; results are ordered by column index and
/// do not depend on the number of worker threads.
pub fn solve_batch(
    system: &LassoSystem,
    settings: &LassoSettings,
    warm: Option<&[WarmStart]>,
) -> Result<BatchSolve> {
    settings.validate()?;
    solve_batch_with(system, |_| *settings, warm)
}

/// Batch solve with per-column settings (for example a λ relative to each
/// column's `λ_max`).
pub fn solve_batch_with(
    system: &LassoSystem,
    settings: impl Fn(usize) -> LassoSettings + Sync,
    warm: Option<&[WarmStart]>,
) -> Result<BatchSolve> {
    let n = system.n();
    let out: Vec<(ColumnSolution, WarmStart)> = (0..n)
        .into_par_iter()
        .map(|i| system.solve_column(i, &settings(i), warm.and_then(|w| w.get(i))))
        .collect::<Result<_>>()?;
    let (solutions, warm) = out.into_iter().unzip();
    Ok(BatchSolve { solutions, warm })
}

/// `λ_max(i) = ‖X₋ᵢᵀx_i‖∞`, the smallest λ with an all-zero solution.
pub fn lambda_max(system: &LassoSystem, i: usize) -> f64 {
    let x = system.matrix();
    let g = x.tr_mul(&x.column(i));
    (0..x.ncols()).filter(|&j| j != i).map(|j| g[j].abs()).fold(0.0, f64::max)
}

/// Lasso self-representation `C` of all columns.
pub fn solve_all<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    settings: &LassoSettings,
) -> Result<SelfRepresentation<T>> {
    settings.validate()?;
    let system = LassoSystem::new(x.as_ref(), settings.admm_rho)?;
    let batch = solve_batch(&system, settings, None)?;
    let failed = batch.failures();
    if let Some(&index) = failed.first() {
        let s = &batch.solutions[index];
        return Err(Error::ColumnFailures {
            index,
            count: failed.len(),
            first: Box::new(Error::NoConvergence {
                iterations: s.iterations,
                residual: s.kkt_residual,
            }),
        });
    }
    batch.representation()
}
