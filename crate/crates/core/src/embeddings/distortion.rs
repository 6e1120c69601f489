//! Empirical and exact distortion of a projection restricted to a subspace.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ProjectionOperator;
use crate::data::check_orthonormal;
use crate::error::Result;
use crate::{rng, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    /// `max |‖Ψx‖ − 1|` over the unit probes.
    pub max_norm_distortion: f64,
    /// `max |⟨x,y⟩ − ⟨Ψx,Ψy⟩| / ((‖x‖² + ‖y‖²)/2)` over probe pairs.
    pub max_inner_product_violation: f64,
    /// Distortion level the caller compares against; 0 when unset.
    pub epsilon_target: f64,
    pub trials: usize,
}

impl DistortionReport {
    pub fn with_target(mut self, eps: f64) -> Self {
        self.epsilon_target = eps;
        self
    }

    /// Both measured distortions are within `epsilon_target`.
    pub fn meets_target(&self) -> bool {
        self.max_norm_distortion <= self.epsilon_target
            && self.max_inner_product_violation <= self.epsilon_target
    }
}

/// Monte-Carlo distortion over `n_probe` random unit vectors of `span(basis)`.
///
/// Probe `t` and probe `t+1` form the inner-product pairs.
pub fn measure_distortion<T: Real>(
    op: &ProjectionOperator<T>,
    basis: &DMatrix<T>,
    n_probe: usize,
    seed: u64,
) -> Result<DistortionReport> {
    check_orthonormal(basis, T::ORTHO_TOL.max(1e-8))?;
    let mut report = DistortionReport {
        max_norm_distortion: 0.0,
        max_inner_product_violation: 0.0,
        epsilon_target: 0.0,
        trials: n_probe,
    };
    if n_probe == 0 {
        return Ok(report);
    }
    let r = basis.ncols();
    let mut g = rng::stream(seed, 0xD157);
    let mut coeffs = DMatrix::<T>::zeros(r, n_probe);
    for t in 0..n_probe {
        let mut c = DVector::from_vec(rng::normals::<T, _>(&mut g, r));
        let n = c.norm();
        if n > T::zero() {
            c /= n;
        }
        coeffs.set_column(t, &c);
    }
    let x = basis * &coeffs;
    let px = op.apply_to_matrix(&x)?;
    for t in 0..n_probe {
        let nx = x.column(t).norm().as_f64();
        let npx = px.column(t).norm().as_f64();
        if nx > 0.0 {
            report.max_norm_distortion = report.max_norm_distortion.max((npx / nx - 1.0).abs());
        }
    }
    for t in 0..n_probe.saturating_sub(1) {
        let (a, b) = (t, t + 1);
        let ip = x.column(a).dot(&x.column(b)).as_f64();
        let pip = px.column(a).dot(&px.column(b)).as_f64();
        let scale = (x.column(a).norm_squared() + x.column(b).norm_squared()).as_f64() / 2.0;
        if scale > 0.0 {
            report.max_inner_product_violation =
                report.max_inner_product_violation.max((ip - pip).abs() / scale);
        }
    }
    Ok(report)
}

/// Worst-case distortion of `Ψ` over the whole subspace, from the singular
/// values of `Ψ·basis`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceDistortion {
    pub sigma_min: f64,
    pub sigma_max: f64,
    /// `sup_{x ∈ L, ‖x‖=1} |‖Ψx‖ − 1| = max(σ_max − 1, 1 − σ_min)`.
    pub norm: f64,
    /// `sup |⟨x,y⟩ − ⟨Ψx,Ψy⟩|` over unit `x, y ∈ L` = `max |1 − σ²|`.
    pub inner_product: f64,
}

pub fn subspace_distortion<T: Real>(
    op: &ProjectionOperator<T>,
    basis: &DMatrix<T>,
) -> Result<SubspaceDistortion> {
    check_orthonormal(basis, T::ORTHO_TOL.max(1e-8))?;
    let pb = op.apply_to_matrix(basis)?;
    let sv = pb.map(|v| v.as_f64()).singular_values();
    let r = basis.ncols();
    // Ψ·basis has min(p, r) singular values; a rank-deficient image has σ_min = 0.
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let sigma_min = if sv.len() < r {
        0.0
    } else {
        sv.iter().copied().fold(f64::INFINITY, f64::min)
    };
    Ok(SubspaceDistortion {
        sigma_min,
        sigma_max,
        norm: (sigma_max - 1.0).max(1.0 - sigma_min),
        inner_product: (sigma_max * sigma_max - 1.0).max(1.0 - sigma_min * sigma_min),
    })
}
