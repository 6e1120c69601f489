//! Geometric quantities behind the success conditions: subspace incoherence,
//! inradius, margin and normalized affinity.

mod conditions;
mod inradius;

pub use conditions::*;
pub use inradius::{inradius, inradius_with, symmetric_hull_inradius, InradiusOptions, EXACT_BUDGET, RESTARTS};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_orthonormal, DataMatrix, Labels, SubspaceEnsemble};
use crate::error::{Error, Result};
use crate::solver::{dual_direction_with, LassoSettings, LassoSystem};
use crate::Real;

/// `‖P_U ν‖` below which a projected dual direction is skipped.
pub const DEGENERATE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryReport {
    pub mu: Vec<f64>,
    pub rho: Vec<f64>,
    pub rho_min: f64,
    pub margin: f64,
    pub affinity: Vec<Vec<f64>>,
    /// Points whose projected dual direction was degenerate and skipped.
    #[serde(default)]
    pub degenerate_points: Vec<usize>,
}

impl GeometryReport {
    pub fn new(mu: Vec<f64>, rho: Vec<f64>, affinity: Vec<Vec<f64>>) -> Result<Self> {
        if mu.len() != rho.len() || mu.is_empty() {
            return Err(Error::LengthMismatch(mu.len(), rho.len()));
        }
        let rho_min = rho.iter().copied().fold(f64::INFINITY, f64::min);
        let m = margin(&mu, &rho);
        Ok(Self {
            mu,
            rho,
            rho_min,
            margin: m,
            affinity,
            degenerate_points: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.mu.len()
    }

    /// Largest off-diagonal affinity (0 for one subspace).
    pub fn max_affinity(&self) -> f64 {
        let mut m = 0.0f64;
        for (i, row) in self.affinity.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if i != j {
                    m = m.max(a);
                }
            }
        }
        m
    }
}

/// `Δ = min_ℓ (ρ_ℓ − μ_ℓ)`.
pub fn margin(mu: &[f64], rho: &[f64]) -> f64 {
    rho.iter()
        .zip(mu)
        .map(|(r, m)| r - m)
        .fold(f64::INFINITY, f64::min)
}

/// Normalized affinity `‖UᵀV‖_F / √(r₁r₂)`, i.e. `√(Σ cos²θ_i / (r₁r₂))`.
pub fn affinity<T: Real>(u: &DMatrix<T>, v: &DMatrix<T>) -> Result<f64> {
    let tol = T::ORTHO_TOL.max(1e-8);
    check_orthonormal(u, tol)?;
    check_orthonormal(v, tol)?;
    if u.nrows() != v.nrows() {
        return Err(Error::DimensionMismatch {
            expected: u.nrows(),
            found: v.nrows(),
        });
    }
    let m = u.map(|x| x.as_f64()).tr_mul(&v.map(|x| x.as_f64()));
    let val = (m.norm_squared() / (u.ncols() * v.ncols()) as f64).sqrt();
    Ok(val.clamp(0.0, 1.0))
}

/// Pairwise affinities of an ensemble; the diagonal holds self-affinity `1/√r_ℓ`.
pub fn affinity_matrix<T: Real>(ensemble: &SubspaceEnsemble<T>) -> Result<Vec<Vec<f64>>> {
    let k = ensemble.k();
    let mut out = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let a = affinity(ensemble.basis(i), ensemble.basis(j))?;
            out[i][j] = a;
            out[j][i] = a;
        }
    }
    Ok(out)
}

/// Subspace incoherence per cluster with the list of skipped points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incoherence {
    pub mu: Vec<f64>,
    pub degenerate_points: Vec<usize>,
}

/// `μ_ℓ = max |⟨v(x), w⟩|` over `x` in cluster `ℓ` and `w` outside it, where
/// `v(x)` is the normalized projection onto `U⁽ℓ⁾` of the dual direction of
/// `x` computed on the whole matrix (with `x` itself excluded).
pub fn subspace_incoherence<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    labels: &Labels,
    bases: &SubspaceEnsemble<T>,
    lambda: f64,
) -> Result<Incoherence> {
    subspace_incoherence_with(x, labels, bases, &LassoSettings::new(lambda))
}

pub fn subspace_incoherence_with<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    labels: &Labels,
    bases: &SubspaceEnsemble<T>,
    settings: &LassoSettings,
) -> Result<Incoherence> {
    let x = x.as_ref();
    if labels.len() != x.len() {
        return Err(Error::LengthMismatch(labels.len(), x.len()));
    }
    if labels.k() != bases.k() {
        return Err(Error::LengthMismatch(labels.k(), bases.k()));
    }
    if bases.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: bases.dim(),
        });
    }
    if labels.k() == 1 {
        return Ok(Incoherence {
            mu: vec![0.0],
            degenerate_points: Vec::new(),
        });
    }
    let system = LassoSystem::new(x, settings.admm_rho)?;
    let duals: Vec<DVector<f64>> = (0..x.len())
        .into_par_iter()
        .map(|i| dual_direction_with(&system, i, settings).map(|dd| dd.nu))
        .collect::<Result<_>>()?;
    incoherence_from_duals(x, labels, bases, &duals)
}

/// Subspace incoherence from precomputed dual directions `ν(x_i)`.
pub fn incoherence_from_duals<T: Real>(
    x: &impl AsRef<DataMatrix<T>>,
    labels: &Labels,
    bases: &SubspaceEnsemble<T>,
    duals: &[DVector<f64>],
) -> Result<Incoherence> {
    let x = x.as_ref();
    if duals.len() != x.len() || labels.len() != x.len() {
        return Err(Error::LengthMismatch(duals.len(), x.len()));
    }
    if labels.k() != bases.k() {
        return Err(Error::LengthMismatch(labels.k(), bases.k()));
    }
    if bases.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            found: bases.dim(),
        });
    }
    let k = labels.k();
    if k == 1 {
        return Ok(Incoherence {
            mu: vec![0.0],
            degenerate_points: Vec::new(),
        });
    }
    let xf = x.matrix().map(|v| v.as_f64());
    let bases_f: Vec<DMatrix<f64>> = bases.bases().iter().map(|b| b.map(|v| v.as_f64())).collect();
    // v(x) for every point, None when degenerate
    let dirs: Vec<Option<DVector<f64>>> = duals
        .iter()
        .enumerate()
        .map(|(i, nu)| {
            let u = &bases_f[labels.get(i)];
            let proj = u * u.tr_mul(nu);
            let n = proj.norm();
            (n >= DEGENERATE_TOL).then(|| proj / n)
        })
        .collect();
    let mut mu = vec![0.0; k];
    let mut degenerate = Vec::new();
    for (l, mu_l) in mu.iter_mut().enumerate() {
        let members = labels.members(l);
        let mut any = false;
        for &i in &members {
            let Some(v) = &dirs[i] else {
                degenerate.push(i);
                continue;
            };
            any = true;
            let inner = xf.tr_mul(v);
            for j in 0..x.len() {
                if labels.get(j) != l {
                    *mu_l = f64::max(*mu_l, inner[j].abs());
                }
            }
        }
        if !any {
            return Err(Error::ProjectionDegenerate(l));
        }
    }
    degenerate.sort_unstable();
    Ok(Incoherence {
        mu,
        degenerate_points: degenerate,
    })
}

/// Leave-one-out inradius of every cluster of `clean` (unit columns), using
/// the ensemble's dimensions.
pub fn cluster_inradii<T: Real>(
    clean: &impl AsRef<DataMatrix<T>>,
    labels: &Labels,
    dims: &[usize],
) -> Result<Vec<f64>> {
    let clean = clean.as_ref();
    if labels.k() != dims.len() {
        return Err(Error::LengthMismatch(labels.k(), dims.len()));
    }
    (0..labels.k())
        .into_par_iter()
        .map(|l| {
            let pts = clean.matrix().select_columns(labels.members(l).iter());
            inradius(&pts, dims[l])
        })
        .collect()
}

/// Full report: `μ` from the observed data, `ρ` from the clean data.
pub fn geometry_report<T: Real>(
    observed: &impl AsRef<DataMatrix<T>>,
    clean: &impl AsRef<DataMatrix<T>>,
    labels: &Labels,
    bases: &SubspaceEnsemble<T>,
    settings: &LassoSettings,
) -> Result<GeometryReport> {
    let inc = subspace_incoherence_with(observed, labels, bases, settings)?;
    let rho = cluster_inradii(clean, labels, &bases.dims())?;
    let mut report = GeometryReport::new(inc.mu, rho, affinity_matrix(bases)?)?;
    report.degenerate_points = inc.degenerate_points;
    Ok(report)
}
