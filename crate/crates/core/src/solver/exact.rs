//! `min ‖c‖₁ s.t. x_i = X₋ᵢc` through a halving ladder of Lasso problems.

use super::{ColumnSolution, LassoSettings, LassoSystem};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::Real;

/// Residual `‖x_i − X₋ᵢc‖` at which the ladder stops.
pub const EXACT_RESIDUAL: f64 = 1e-6;
const MAX_STAGES: usize = 60;

/// Distance from `x_i` to `span(X₋ᵢ)`.
fn span_residual(system: &LassoSystem, i: usize) -> f64 {
    let x = system.matrix();
    let others: Vec<usize> = (0..x.ncols()).filter(|&j| j != i).collect();
    let a = x.select_columns(others.iter());
    let target = x.column(i).clone_owned();
    let svd = a.svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let mut proj = target.clone() * 0.0;
    for (t, &s) in svd.singular_values.iter().enumerate() {
        if s > 1e-10 * smax.max(1e-300) {
            let ut = u.column(t);
            proj.axpy(ut.dot(&target), &ut, 1.0);
        }
    }
    (target - proj).norm()
}

pub fn exact_column<T: Real>(x: &impl AsRef<DataMatrix<T>>, i: usize) -> Result<ColumnSolution> {
    exact_column_with(x, i, &LassoSettings::new(1.0))
}

/// As [`exact_column`]; `settings.lambda` is ignored, the other fields
/// control each stage.
pub fn exact_column_with<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    i: usize,
    settings: &LassoSettings,
) -> Result<ColumnSolution> {
    let system = LassoSystem::new(x.as_ref(), settings.admm_rho)?;
    let n = system.n();
    if i >= n || n < 2 {
        return Err(Error::BadDimensions(format!("column {i} with N={n}")));
    }
    let gap = span_residual(&system, i);
    if gap > EXACT_RESIDUAL {
        return Err(Error::Infeasible(gap));
    }
    let xm = system.matrix();
    let corr = xm.tr_mul(&xm.column(i));
    let lambda0 = (0..n)
        .filter(|&j| j != i)
        .map(|j| corr[j].abs())
        .fold(0.0, f64::max);
    if lambda0 == 0.0 {
        return Err(Error::Infeasible(xm.column(i).norm()));
    }
    let mut warm = None;
    let mut last = None;
    for t in 1..=MAX_STAGES {
        let lambda = lambda0 * 0.5f64.powi(t as i32);
        let stage = LassoSettings {
            lambda,
            tol_kkt: settings.tol_kkt.min(1e-2 * lambda),
            ..*settings
        };
        let (sol, w) = system.solve_column(i, &stage, warm.as_ref())?;
        warm = Some(w);
        if sol.converged && sol.residual_norm <= EXACT_RESIDUAL {
            return Ok(sol);
        }
        last = Some(sol);
    }
    Err(Error::Infeasible(last.map_or(f64::INFINITY, |s| s.residual_norm)))
}
