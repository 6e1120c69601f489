//! Sufficient conditions for the subspace detection property, evaluated on a
//! geometry report. Hidden big-O constants are explicit arguments.
//!
//! Every checker returns the full list of inequalities it evaluated. An
//! infinite bound (for example a λ lower bound when `Δ ≤ 0`) is stored as
//! `f64::MAX` so that all numbers stay finite.

use serde::{Deserialize, Serialize};

use super::GeometryReport;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs < rhs` when true, `lhs ≤ rhs` otherwise.
    pub strict: bool,
    pub holds: bool,
}

impl InequalityCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64, strict: bool) -> Self {
        let (lhs, rhs) = (finite(lhs), finite(rhs));
        let holds = if strict { lhs < rhs } else { lhs <= rhs };
        Self {
            name: name.into(),
            lhs,
            rhs,
            strict,
            holds,
        }
    }

    fn relative_slack(&self) -> f64 {
        (self.rhs - self.lhs) / self.lhs.abs().max(self.rhs.abs()).max(f64::MIN_POSITIVE)
    }
}

fn finite(x: f64) -> f64 {
    if x.is_nan() {
        f64::MAX
    } else {
        x.clamp(-f64::MAX, f64::MAX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionVerdict {
    pub satisfied: bool,
    /// Name of the first failing inequality, or of the tightest one when all hold.
    pub binding_constraint: String,
    pub lhs: f64,
    pub rhs: f64,
    pub checks: Vec<InequalityCheck>,
}

impl ConditionVerdict {
    pub fn from_checks(checks: Vec<InequalityCheck>) -> Self {
        let satisfied = checks.iter().all(|c| c.holds);
        let binding = if satisfied {
            checks
                .iter()
                .min_by(|a, b| a.relative_slack().total_cmp(&b.relative_slack()))
        } else {
            checks.iter().find(|c| !c.holds)
        };
        let (name, lhs, rhs) = binding.map_or((String::new(), 0.0, 0.0), |c| (c.name.clone(), c.lhs, c.rhs));
        Self {
            satisfied,
            binding_constraint: name,
            lhs,
            rhs,
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Constants of the stochastic-noise λ range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    #[serde(default = "default_c1")]
    pub c1: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_c")]
    pub c_eps: f64,
}

fn default_c1() -> f64 {
    80.0
}
fn default_c2() -> f64 {
    20.0
}
fn default_c() -> f64 {
    1.0
}

impl Default for NoiseConstants {
    fn default() -> Self {
        Self {
            c1: default_c1(),
            c2: default_c2(),
            c_eps: default_c(),
        }
    }
}

fn incoherence_checks(report: &GeometryReport) -> Vec<InequalityCheck> {
    let mut out: Vec<InequalityCheck> = report
        .mu
        .iter()
        .zip(&report.rho)
        .enumerate()
        .map(|(l, (&mu, &rho))| InequalityCheck::new(format!("incoherence below inradius [{l}]"), mu, rho, true))
        .collect();
    out.push(InequalityCheck::new("margin positive", 0.0, report.margin, true));
    out
}

/// `ε` (or `max(ε, η)`) bound `c·Δ²·λ^{3/2}`.
pub fn perturbation_threshold(margin: f64, lambda: f64, c: f64) -> f64 {
    c * margin * margin * lambda.powf(1.5)
}

/// Noiseless data: `μ_ℓ < ρ_ℓ`, `0 < λ < ρ/2`, `ε ≤ c_eps·Δ²λ^{3/2}`.
pub fn check_noiseless(report: &GeometryReport, lambda: f64, eps: f64, c_eps: f64) -> ConditionVerdict {
    let mut checks = incoherence_checks(report);
    checks.push(InequalityCheck::new("lambda lower", 0.0, lambda, true));
    checks.push(InequalityCheck::new("lambda upper", lambda, report.rho_min / 2.0, true));
    checks.push(InequalityCheck::new(
        "epsilon bound",
        eps,
        perturbation_threshold(report.margin, lambda, c_eps),
        false,
    ));
    ConditionVerdict::from_checks(checks)
}

fn lower_over_margin(numerator: f64, margin: f64) -> f64 {
    if margin > 0.0 {
        numerator / margin
    } else if numerator == 0.0 {
        0.0
    } else {
        f64::MAX
    }
}

/// Bounded (adversarial) noise `‖z_i‖ ≤ η`:
/// `24η/Δ < λ < ρ(1−ε) − 6η` and `max(ε, η) ≤ c_eps·Δ²λ^{3/2}`.
pub fn check_deterministic_noise(
    report: &GeometryReport,
    lambda: f64,
    eps: f64,
    eta: f64,
    c_eps: f64,
) -> ConditionVerdict {
    let mut checks = incoherence_checks(report);
    checks.push(InequalityCheck::new(
        "lambda lower",
        lower_over_margin(24.0 * eta, report.margin),
        lambda,
        true,
    ));
    checks.push(InequalityCheck::new(
        "lambda upper",
        lambda,
        report.rho_min * (1.0 - eps) - 6.0 * eta,
        true,
    ));
    checks.push(InequalityCheck::new(
        "noise bound",
        eps.max(eta),
        perturbation_threshold(report.margin, lambda, c_eps),
        false,
    ));
    ConditionVerdict::from_checks(checks)
}

/// `σ(1+σ)√(ln N / d)`, the noise scale of the stochastic λ range.
pub fn stochastic_noise_level(sigma: f64, d: usize, n: usize) -> f64 {
    sigma * (1.0 + sigma) * ((n as f64).ln() / d as f64).sqrt()
}

/// The three σ bounds (without the constant) for Gaussian noise.
pub fn stochastic_sigma_bounds(margin: f64, rho: f64, lambda: f64, d: usize, n: usize, r: usize) -> [f64; 3] {
    let (d, ln_n, r) = (d as f64, (n as f64).ln(), r as f64);
    let dm = margin.max(0.0);
    [
        dm.sqrt() * lambda.sqrt() * d.powf(0.25) / ln_n.powf(0.25),
        dm * rho.sqrt() * d.powf(0.25) / (r.powf(0.25) * ln_n.powf(1.25)),
        dm * dm * lambda.powf(1.5) * d.sqrt() / (r.sqrt() * ln_n.powf(1.5)),
    ]
}

/// Gaussian noise `N(0, σ²/d)`:
/// `C1·s/Δ < λ < ρ/2 − C2·s` with `s = σ(1+σ)√(ln N/d)`,
/// `ε ≤ c·Δ²λ^{3/2}` and `σ ≤ c·min{…}`.
#[allow(clippy::too_many_arguments)]
pub fn check_stochastic_noise(
    report: &GeometryReport,
    lambda: f64,
    eps: f64,
    sigma: f64,
    d: usize,
    n: usize,
    r: usize,
    constants: NoiseConstants,
) -> ConditionVerdict {
    let s = stochastic_noise_level(sigma, d, n);
    let mut checks = incoherence_checks(report);
    checks.push(InequalityCheck::new(
        "lambda lower",
        lower_over_margin(constants.c1 * s, report.margin).max(0.0),
        lambda,
        true,
    ));
    checks.push(InequalityCheck::new(
        "lambda upper",
        lambda,
        report.rho_min / 2.0 - constants.c2 * s,
        true,
    ));
    checks.push(InequalityCheck::new(
        "epsilon bound",
        eps,
        perturbation_threshold(report.margin, lambda, constants.c_eps),
        false,
    ));
    let bounds = stochastic_sigma_bounds(report.margin, report.rho_min, lambda, d, n, r);
    let smin = bounds.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(InequalityCheck::new("sigma bound", sigma, constants.c_eps * smin, false));
    ConditionVerdict::from_checks(checks)
}

/// Noise level allowed by the noisy-SSC theorem: `min_ℓ ρ(ρ_ℓ−μ_ℓ)/(7ρ_ℓ+2)`.
pub fn cited_noise_threshold(report: &GeometryReport) -> f64 {
    report
        .rho
        .iter()
        .zip(&report.mu)
        .map(|(&rl, &ml)| report.rho_min * (rl - ml) / (7.0 * rl + 2.0))
        .fold(f64::INFINITY, f64::min)
}

/// Uncompressed noisy SSC: `η ≤ min_ℓ ρ(ρ_ℓ−μ_ℓ)/(7ρ_ℓ+2)` and
/// `max_ℓ η(1+η)(2+ρ_ℓ)/(ρ_ℓ−μ_ℓ−2η) < λ < ρ − 2η − η²`.
pub fn check_cited_noisy_ssc(report: &GeometryReport, lambda: f64, eta: f64) -> ConditionVerdict {
    let mut checks = incoherence_checks(report);
    checks.push(InequalityCheck::new("noise bound", eta, cited_noise_threshold(report), false));
    let mut lower = 0.0f64;
    for (&rl, &ml) in report.rho.iter().zip(&report.mu) {
        let denom = rl - ml - 2.0 * eta;
        let term = if denom > 0.0 {
            eta * (1.0 + eta) * (2.0 + rl) / denom
        } else {
            f64::MAX
        };
        lower = lower.max(term);
    }
    checks.push(InequalityCheck::new("lambda lower", lower, lambda, true));
    checks.push(InequalityCheck::new(
        "lambda upper",
        lambda,
        report.rho_min - 2.0 * eta - eta * eta,
        true,
    ));
    ConditionVerdict::from_checks(checks)
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return Err(Error::BadParameter(format!("kappa must be > 1, got {kappa}")));
    }
    Ok(())
}

/// Affinity bound of the semi-random model: `c/ln²(kN)·√(ln κ / r)`.
pub fn semirandom_affinity_threshold(kappa: f64, r: usize, k: usize, n: usize, c: f64) -> Result<f64> {
    check_kappa(kappa)?;
    let lkn = ((k * n) as f64).ln();
    Ok(c / (lkn * lkn) * (kappa.ln() / r as f64).sqrt())
}

/// Semi-random model: the largest pairwise affinity is below the threshold.
pub fn check_semirandom(
    kappa: f64,
    r: usize,
    k: usize,
    n: usize,
    affinity_max: f64,
    c: f64,
) -> Result<ConditionVerdict> {
    let t = semirandom_affinity_threshold(kappa, r, k, n, c)?;
    Ok(ConditionVerdict::from_checks(vec![InequalityCheck::new(
        "affinity bound",
        affinity_max,
        t,
        false,
    )]))
}

/// Projected dimension `⌈c·r^{9/2}·ln(kN)/ln^{7/2} κ⌉`.
pub fn semirandom_dimension(r: usize, k: usize, n: usize, kappa: f64, c: f64) -> Result<usize> {
    check_kappa(kappa)?;
    let v = c * (r as f64).powf(4.5) * ((k * n) as f64).ln() / kappa.ln().powf(3.5);
    Ok(v.ceil() as usize)
}

/// Fully random model: `r ≤ c·d·ln κ / ln N`.
pub fn check_fully_random(r: usize, d: usize, n: usize, kappa: f64, c: f64) -> Result<ConditionVerdict> {
    check_kappa(kappa)?;
    let rhs = c * d as f64 * kappa.ln() / (n as f64).ln();
    Ok(ConditionVerdict::from_checks(vec![InequalityCheck::new(
        "dimension bound",
        r as f64,
        rhs,
        false,
    )]))
}

/// Incoherence bound for semi-random data:
/// `t·(ln((N_ℓ+1)N_ℓ′) + ln k)·aff`.
pub fn semirandom_incoherence_bound(t: f64, n_l: usize, n_other: usize, k: usize, affinity: f64) -> f64 {
    t * ((((n_l + 1) * n_other) as f64).ln() + (k as f64).ln()) * affinity
}

/// Incoherence bound for fully random subspaces: `√(6 ln N / d)`.
pub fn fully_random_incoherence_bound(n: usize, d: usize) -> f64 {
    (6.0 * (n as f64).ln() / d as f64).sqrt()
}
