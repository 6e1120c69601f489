//! Attribute-level `(ε, δ)`-differentially private release of compressed,
//! column-normalized data via the Gaussian mechanism.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_orthonormal, normalize_columns, DataMatrix, NormalizedDataMatrix};
use crate::embeddings::ProjectionOperator;
use crate::error::{Error, Result};
use crate::geometry::{ConditionVerdict, GeometryReport, InequalityCheck};
use crate::{io, rng, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub eps_priv: f64,
    pub delta_priv: f64,
    /// Spikiness bound of every data column.
    pub mu0: f64,
    /// Distortion of the projection applied before release.
    pub eps_embed: f64,
}

impl PrivacyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_priv > 0.0) {
            return Err(Error::BadParameter(format!("eps_priv must be > 0, got {}", self.eps_priv)));
        }
        if !(self.delta_priv > 0.0 && self.delta_priv < 1.0) {
            return Err(Error::BadParameter(format!(
                "delta_priv must be in (0, 1), got {}",
                self.delta_priv
            )));
        }
        if !(self.mu0 >= 1.0) || !self.mu0.is_finite() {
            return Err(Error::BadParameter(format!("mu0 must be >= 1, got {}", self.mu0)));
        }
        check_embed(self.eps_embed)
    }
}

fn check_embed(eps: f64) -> Result<()> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::BadParameter(format!("eps_embed must be in [0, 1), got {eps}")));
    }
    Ok(())
}

/// `d‖x‖∞² / ‖x‖₂²`, between 1 and `d`.
pub fn spikiness<T: Real>(x: &[T]) -> Result<f64> {
    let (mut sq, mut mx) = (0.0f64, 0.0f64);
    for v in x {
        let v = v.as_f64();
        sq += v * v;
        mx = mx.max(v.abs());
    }
    if sq == 0.0 || x.is_empty() {
        return Err(Error::ZeroVector);
    }
    Ok(x.len() as f64 * mx * mx / sq)
}

/// `(d/r)·maxᵢ ‖U₍ᵢ₎‖²` of an orthonormal `d × r` basis.
pub fn column_space_incoherence<T: Real>(u: &DMatrix<T>) -> Result<f64> {
    check_orthonormal(u, T::ORTHO_TOL.max(1e-8))?;
    let (d, r) = u.shape();
    let max_row = u
        .row_iter()
        .map(|row| row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(d as f64 / r as f64 * max_row)
}

/// `σ = (1+ε_e)/(1−ε_e) · √(32 μ₀ ln(1.25/δ)) / ε_p`.
pub fn noise_scale(params: &PrivacyParams) -> Result<f64> {
    params.validate()?;
    let e = params.eps_embed;
    Ok((1.0 + e) / (1.0 - e) * (32.0 * params.mu0 * (1.25 / params.delta_priv).ln()).sqrt() / params.eps_priv)
}

/// `4√(μ₀/d) · (1+ε)/(1−ε)`, the ℓ₂ sensitivity of `Normalize(ΨX)` to one entry.
pub fn l2_sensitivity_bound(mu0: f64, eps_embed: f64, d: usize) -> Result<f64> {
    check_embed(eps_embed)?;
    if !(mu0 >= 1.0) || d == 0 {
        return Err(Error::BadParameter(format!("need mu0 >= 1 and d >= 1, got {mu0}, {d}")));
    }
    Ok(4.0 * (mu0 / d as f64).sqrt() * (1.0 + eps_embed) / (1.0 - eps_embed))
}

/// Noisy release `Normalize(ΨX) + N(0, σ²/d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivateRelease<T: Real> {
    pub data: DataMatrix<T>,
    pub sigma: f64,
    pub params: PrivacyParams,
    pub seed: u64,
    pub d_original: usize,
}

#[derive(Serialize, Deserialize)]
struct ReleaseMeta {
    params: PrivacyParams,
    sigma: f64,
    seed: u64,
    d_original: usize,
}

impl<T: Real> PrivateRelease<T> {
    /// Writes `release.json` and `data.csv` into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let meta = ReleaseMeta {
            params: self.params,
            sigma: self.sigma,
            seed: self.seed,
            d_original: self.d_original,
        };
        let path = dir.join("release.json");
        std::fs::write(&path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(path, e))?;
        io::save_csv(&self.data, dir.join("data.csv"))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("release.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let meta: ReleaseMeta = serde_json::from_str(&text)?;
        Ok(Self {
            data: io::load_csv(dir.join("data.csv"), false)?,
            sigma: meta.sigma,
            params: meta.params,
            seed: meta.seed,
            d_original: meta.d_original,
        })
    }
}

/// Adds i.i.d. `N(0, σ²/d_original)` noise to an already projected and
/// normalized matrix. The result is not re-normalized.
pub fn privatize<T: Real>(
    xn: &NormalizedDataMatrix<T>,
    params: &PrivacyParams,
    d_original: usize,
    seed: u64,
) -> Result<PrivateRelease<T>> {
    if d_original == 0 {
        return Err(Error::BadParameter("d_original must be >= 1".into()));
    }
    let sigma = noise_scale(params)?;
    let sd = sigma / (d_original as f64).sqrt();
    let m = xn.matrix();
    let (p, n) = m.shape();
    let cols: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(seed, 0x5000_0000 + j as u64);
            (0..p)
                .map(|i| T::of(m[(i, j)].as_f64() + sd * rng::normal::<f64, _>(&mut g)))
                .collect()
        })
        .collect();
    let data = DataMatrix::new(DMatrix::from_fn(p, n, |i, j| cols[j][i]))?;
    Ok(PrivateRelease {
        data,
        sigma,
        params: *params,
        seed,
        d_original,
    })
}

/// `B = min{ρ, r^{-1/2}, Δ}` of the utility condition.
pub fn utility_margin(report: &GeometryReport, r: usize) -> f64 {
    report.rho_min.min(1.0 / (r as f64).sqrt()).min(report.margin)
}

/// `c·√(μ₀ ln(1/δ)/d) · max{ln^{5/4}N / B², ln^{3/2}N / (B^{11/2} p^{1/4})}`.
pub fn utility_threshold(delta_priv: f64, mu0: f64, d: usize, p: usize, n: usize, b: f64, c: f64) -> Result<f64> {
    if !(b > 0.0) || !(c > 0.0) {
        return Err(Error::BadParameter(format!("need B > 0 and c > 0, got B={b}, c={c}")));
    }
    if !(delta_priv > 0.0 && delta_priv < 1.0) || d == 0 || p == 0 || n < 2 {
        return Err(Error::BadParameter("need delta in (0,1), d, p >= 1, N >= 2".into()));
    }
    let ln_n = (n as f64).ln();
    let t1 = ln_n.powf(1.25) / (b * b);
    let t2 = ln_n.powf(1.5) / (b.powf(5.5) * (p as f64).powf(0.25));
    Ok(c * (mu0 * (1.0 / delta_priv).ln() / d as f64).sqrt() * t1.max(t2))
}

/// Whether `eps_priv` is large enough for the private release to keep the
/// subspace detection property.
#[allow(clippy::too_many_arguments)]
pub fn check_utility(
    eps_priv: f64,
    delta_priv: f64,
    mu0: f64,
    d: usize,
    p: usize,
    n: usize,
    b: f64,
    c: f64,
) -> Result<ConditionVerdict> {
    if !(eps_priv > 0.0) {
        return Err(Error::BadParameter(format!("eps_priv must be > 0, got {eps_priv}")));
    }
    let t = utility_threshold(delta_priv, mu0, d, p, n, b, c)?;
    Ok(ConditionVerdict::from_checks(vec![InequalityCheck::new(
        "privacy budget",
        t,
        eps_priv,
        false,
    )]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `max ‖Normalize(ΨX) − Normalize(ΨX′)‖_F` over trials.
    pub max_sensitivity: f64,
    /// Largest `|‖Ψv‖ − 1|` over the unit vectors the bound relies on
    /// (each base column and each perturbed coordinate direction).
    pub max_local_distortion: f64,
    pub trials: usize,
}

/// Single-entry perturbation test of `Normalize(Ψ·)`. Each trial draws a unit
/// column with spikiness `≤ μ₀` and replaces one entry by a value of at most
/// `√(μ₀/d)` in magnitude, keeping spikiness `≤ μ₀`; `magnitude` scales the
/// change. Only the perturbed column differs, so the Frobenius distance is
/// that of one column.
pub fn empirical_sensitivity<T: Real>(
    op: &ProjectionOperator<T>,
    mu0: f64,
    trials: usize,
    magnitude: f64,
    seed: u64,
) -> Result<SensitivityReport> {
    if !(mu0 >= 1.0) || !(0.0..=1.0).contains(&magnitude) {
        return Err(Error::BadParameter(format!(
            "need mu0 >= 1 and magnitude in [0, 1], got {mu0}, {magnitude}"
        )));
    }
    let d = op.input_dim();
    let bound = (mu0 / d as f64).sqrt();
    let per_trial: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, f64)> {
            let mut g = rng::stream(seed, t as u64);
            let x = flat_unit_vector(d, mu0, &mut g);
            let j = g.random_range(0..d);
            let mut x2 = x.clone();
            let mut accepted = false;
            for _ in 0..32 {
                let target = bound * (2.0 * g.random::<f64>() - 1.0);
                x2[j] = x[j] + magnitude * (target - x[j]);
                if x2.iter().any(|v| *v != 0.0) && spikiness(&x2)? <= mu0 {
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                // a sign flip keeps the spikiness
                x2[j] = x[j] - magnitude * 2.0 * x[j];
            }
            let to_t = |v: &[f64]| v.iter().map(|&a| T::of(a)).collect::<Vec<T>>();
            let a = DataMatrix::from_columns(&[nalgebra::DVector::from_vec(to_t(&x))])?;
            let b = DataMatrix::from_columns(&[nalgebra::DVector::from_vec(to_t(&x2))])?;
            let pa = normalize_columns(&crate::embeddings::apply(op, &a)?)?;
            let pb = normalize_columns(&crate::embeddings::apply(op, &b)?)?;
            let diff = (pa.matrix() - pb.matrix()).map(|v| v.as_f64()).norm();
            let norm_x = pa.original_norms()[0].as_f64();
            let norm_e = op
                .apply_sparse(&[(j, T::one())])?
                .iter()
                .map(|v| v.as_f64() * v.as_f64())
                .sum::<f64>()
                .sqrt();
            Ok((diff, (norm_x - 1.0).abs().max((norm_e - 1.0).abs())))
        })
        .collect::<Result<_>>()?;
    Ok(SensitivityReport {
        max_sensitivity: per_trial.iter().map(|p| p.0).fold(0.0, f64::max),
        max_local_distortion: per_trial.iter().map(|p| p.1).fold(0.0, f64::max),
        trials,
    })
}

/// Unit vector with random signs and magnitudes whose spikiness is at most `mu0`.
fn flat_unit_vector(d: usize, mu0: f64, g: &mut impl Rng) -> Vec<f64> {
    let mut spread = 0.9;
    loop {
        let v: Vec<f64> = (0..d)
            .map(|_| {
                let s = if g.random::<bool>() { 1.0 } else { -1.0 };
                s * (1.0 - spread * g.random::<f64>())
            })
            .collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let v: Vec<f64> = v.iter().map(|a| a / n).collect();
        if spread <= 0.0 || spikiness(&v).unwrap_or(f64::INFINITY) <= mu0 {
            return v;
        }
        spread = (spread - 0.1f64).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spikiness_examples() {
        let mut e1 = vec![0.0; 9];
        e1[0] = 1.0;
        assert_eq!(spikiness(&e1).unwrap(), 9.0);
        assert!((spikiness(&[0.5f64; 4]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(spikiness(&[1.0, 1.0, 0.0, 0.0]).unwrap(), 2.0);
        assert!(matches!(spikiness(&[0.0f64; 3]), Err(Error::ZeroVector)));
    }

    #[test]
    fn flat_vectors_respect_the_bound() {
        let mut g = rng::stream(1, 0);
        for mu0 in [1.0, 1.2, 2.0, 5.0] {
            let v = flat_unit_vector(50, mu0, &mut g);
            assert!(spikiness(&v).unwrap() <= mu0 + 1e-12);
        }
    }
}
