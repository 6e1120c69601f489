//! ADMM for one Lasso column, sharing one factorization across all columns.
//!
//! The design matrix is the full `X`; the self-coefficient is pinned by
//! forcing `z_i = 0` in the shrinkage step, so `(XᵀX + ρI)` never changes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{ColumnSolution, LassoSettings, WarmStart};
use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::Real;

/// Iterations between certificate checks.
const CHECK_EVERY: usize = 5;
/// Base number of active-set rounds during polishing.
const POLISH_ROUNDS: usize = 20;
/// Relative eigenvalue below which support columns count as dependent.
const NULL_TOL: f64 = 1e-12;
/// Relative truncation applied to returned coefficients.
pub const TRUNCATION: f64 = 1e-8;

enum Factor {
    /// `p < N`: Cholesky of `ρI_p + XXᵀ`, used through the Woodbury identity.
    Woodbury(Cholesky<f64, Dyn>),
    /// Cholesky of `XᵀX + ρI_N`.
    Direct(Cholesky<f64, Dyn>),
}

/// Data matrix in working precision plus the cached ADMM factorization.
pub struct LassoSystem {
    x: DMatrix<f64>,
    rho: f64,
    factor: Factor,
}

/// Optimality certificate of a candidate coefficient vector.
pub(crate) struct Certificate {
    pub kkt: f64,
    pub primal: f64,
    pub dual: f64,
    pub nu: DVector<f64>,
    pub residual_norm: f64,
}

impl Certificate {
    fn accepts(&self, tol: f64) -> bool {
        self.kkt <= tol && self.primal - self.dual <= tol * self.primal.max(1.0)
    }
}

fn soft(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

impl LassoSystem {
    pub fn new<T: Real>(x: &DataMatrix<T>, rho: f64) -> Result<Self> {
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::BadParameter(format!("ADMM penalty must be > 0, got {rho}")));
        }
        let x = x.matrix().map(|v| v.as_f64());
        let (p, n) = x.shape();
        let factor = if p < n {
            let mut k = &x * x.transpose();
            for j in 0..p {
                k[(j, j)] += rho;
            }
            Factor::Woodbury(Cholesky::new(k).ok_or_else(|| {
                Error::BadParameter("ADMM system is not positive definite".into())
            })?)
        } else {
            let mut k = x.tr_mul(&x);
            for j in 0..n {
                k[(j, j)] += rho;
            }
            Factor::Direct(Cholesky::new(k).ok_or_else(|| {
                Error::BadParameter("ADMM system is not positive definite".into())
            })?)
        };
        Ok(Self { x, rho, factor })
    }

    pub fn n(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub(crate) fn matrix(&self) -> &DMatrix<f64> {
        &self.x
    }

    /// `(XᵀX + ρI)⁻¹ b`.
    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match &self.factor {
            Factor::Woodbury(chol) => {
                let xb = &self.x * b;
                let t = chol.solve(&xb);
                (b - self.x.tr_mul(&t)) / self.rho
            }
            Factor::Direct(chol) => chol.solve(b),
        }
    }

    fn residual(&self, i: usize, coef: &[(usize, f64)]) -> DVector<f64> {
        let mut r = self.x.column(i).clone_owned();
        for &(j, c) in coef {
            r.axpy(-c, &self.x.column(j), 1.0);
        }
        r
    }

    /// KKT residual, primal/dual values and feasible dual point of `coef`.
    pub(crate) fn certify(&self, i: usize, lambda: f64, coef: &[(usize, f64)]) -> Certificate {
        let r = self.residual(i, coef);
        let g = self.x.tr_mul(&r);
        let mut dense = vec![0.0; self.n()];
        for &(j, c) in coef {
            dense[j] = c;
        }
        let mut kkt = 0.0f64;
        let mut gmax = 0.0f64;
        for j in 0..self.n() {
            if j == i {
                continue;
            }
            gmax = gmax.max(g[j].abs());
            let v = if dense[j] != 0.0 {
                (g[j] - lambda * dense[j].signum()).abs()
            } else {
                (g[j].abs() - lambda).max(0.0)
            };
            kkt = kkt.max(v);
        }
        let l1: f64 = coef.iter().map(|(_, c)| c.abs()).sum();
        let rr = r.norm_squared();
        let primal = 0.5 * rr + lambda * l1;
        // θ = r scaled into {‖X₋ᵢᵀθ‖∞ ≤ λ}; dual value ⟨x,θ⟩ − ½‖θ‖².
        let scale = if gmax > lambda { lambda / gmax } else { 1.0 };
        let theta = &r * scale;
        let dual = self.x.column(i).dot(&theta) - 0.5 * theta.norm_squared();
        Certificate {
            kkt,
            primal,
            dual,
            nu: theta / lambda,
            residual_norm: rr.sqrt(),
        }
    }

    /// Primal active-set refinement started from an ADMM iterate.
    ///
    /// Each round first removes linear dependence inside the support by moving
    /// along a null direction of `X_S` that does not increase `‖c‖₁`, then
    /// solves the sign-fixed stationarity system on the support. A partial
    /// step is taken when a coefficient would change sign; otherwise the most
    /// violated off-support coordinate enters. Returns a stationary point or
    /// `None` when the round budget runs out.
    fn polish(&self, i: usize, lambda: f64, start: &[(usize, f64)], tol: f64) -> Option<Vec<(usize, f64)>> {
        // (index, sign, value); value may be 0 for a freshly entered coordinate
        let mut cur: Vec<(usize, f64, f64)> = start
            .iter()
            .filter(|&&(j, v)| j != i && v != 0.0)
            .map(|&(j, v)| (j, v.signum(), v))
            .collect();
        let rounds = POLISH_ROUNDS + 4 * self.dim();
        for _ in 0..rounds {
            self.reduce_to_independent(&mut cur)?;
            let c = if cur.is_empty() {
                Vec::new()
            } else {
                let cols: Vec<usize> = cur.iter().map(|e| e.0).collect();
                let xs = self.x.select_columns(cols.iter());
                let mut b = xs.tr_mul(&self.x.column(i));
                for (t, e) in cur.iter().enumerate() {
                    b[t] -= lambda * e.1;
                }
                let sol = Cholesky::new(xs.tr_mul(&xs))?.solve(&b);
                if sol.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                sol.iter().copied().collect()
            };
            let consistent = cur.iter().zip(&c).all(|(e, v)| v * e.1 > 0.0);
            if consistent {
                let coef: Vec<(usize, f64)> = cur.iter().zip(&c).map(|(e, &v)| (e.0, v)).collect();
                let r = self.residual(i, &coef);
                let g = self.x.tr_mul(&r);
                let mut worst: Option<(usize, f64)> = None;
                for j in (0..self.n()).filter(|&j| j != i && !cur.iter().any(|e| e.0 == j)) {
                    let viol = g[j].abs() - lambda;
                    if viol > 0.5 * tol && worst.is_none_or(|(_, w)| viol > w) {
                        worst = Some((j, viol));
                    }
                }
                match worst {
                    None => return Some(coef),
                    Some((j, _)) => {
                        for (e, &v) in cur.iter_mut().zip(&c) {
                            e.2 = v;
                        }
                        cur.push((j, g[j].signum(), 0.0));
                    }
                }
            } else {
                // largest step toward c that keeps every sign
                let mut t = 1.0f64;
                let mut hit = 0;
                for (k, (e, &v)) in cur.iter().zip(&c).enumerate() {
                    if v * e.1 <= 0.0 {
                        let tk = if e.2 == 0.0 { 0.0 } else { e.2 / (e.2 - v) };
                        if tk < t {
                            t = tk;
                            hit = k;
                        }
                    }
                }
                for (e, &v) in cur.iter_mut().zip(&c) {
                    e.2 += t * (v - e.2);
                }
                cur.remove(hit);
                cur.retain(|e| e.2 * e.1 > 0.0);
            }
        }
        None
    }

    /// Moves along null directions of `X_S` (which leave the residual
    /// unchanged) until the support columns are linearly independent.
    fn reduce_to_independent(&self, cur: &mut Vec<(usize, f64, f64)>) -> Option<()> {
        for _ in 0..=self.n() {
            if cur.is_empty() {
                return Some(());
            }
            let cols: Vec<usize> = cur.iter().map(|e| e.0).collect();
            let xs = self.x.select_columns(cols.iter());
            let eig = xs.tr_mul(&xs).symmetric_eigen();
            let (kmin, &emin) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))?;
            let emax = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
            if emin > NULL_TOL * emax.max(1.0) {
                return Some(());
            }
            let mut v: Vec<f64> = eig.eigenvectors.column(kmin).iter().copied().collect();
            let slope: f64 = cur.iter().zip(&v).map(|(e, vj)| e.1 * vj).sum();
            if slope > 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            let step = |v: &[f64]| {
                cur.iter()
                    .zip(v)
                    .enumerate()
                    .filter(|(_, (e, vj))| **vj * e.1 < 0.0)
                    .map(|(k, (e, vj))| (k, (e.2 / -*vj).abs()))
                    .min_by(|a, b| a.1.total_cmp(&b.1))
            };
            let (k, t) = match step(&v) {
                Some(s) => s,
                None => {
                    v.iter_mut().for_each(|x| *x = -*x);
                    step(&v)?
                }
            };
            for (e, vj) in cur.iter_mut().zip(&v) {
                e.2 += t * vj;
            }
            cur.remove(k);
            cur.retain(|e| e.2 * e.1 > 0.0);
        }
        None
    }

    /// Runs ADMM on column `i`. Returns the best certified iterate; its
    /// `converged` flag is false when `max_iters` ran out first.
    pub fn solve_column(
        &self,
        i: usize,
        settings: &LassoSettings,
        warm: Option<&WarmStart>,
    ) -> Result<(ColumnSolution, WarmStart)> {
        let n = self.n();
        if i >= n {
            return Err(Error::BadDimensions(format!("column {i} out of range for N={n}")));
        }
        if n < 2 {
            return Err(Error::BadDimensions("Lasso self-regression needs N >= 2".into()));
        }
        settings.validate()?;
        let lambda = settings.lambda;
        let tol = settings.tol_kkt;
        let q = self.x.tr_mul(&self.x.column(i));
        let (mut z, mut u) = match warm {
            Some(w) if w.z.len() == n && w.u.len() == n => (w.z.clone(), w.u.clone()),
            _ => (DVector::zeros(n), DVector::zeros(n)),
        };
        z[i] = 0.0;

        let sparse = |z: &DVector<f64>| -> Vec<(usize, f64)> {
            z.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, v)| (j, *v)).collect()
        };
        let finish = |coef: Vec<(usize, f64)>, cert: Certificate, iterations: usize, converged: bool| {
            ColumnSolution::new(i, lambda, coef, cert, iterations, converged)
        };

        let start = sparse(&z);
        let cert = self.certify(i, lambda, &start);
        if cert.accepts(tol) {
            let sol = finish(start, cert, 0, true);
            return Ok((sol, WarmStart { z, u }));
        }

        let thresh = lambda / self.rho;
        let mut last_support: Vec<usize> = Vec::new();
        let mut polished_support: Option<Vec<usize>> = None;
        let mut best: Option<(Vec<(usize, f64)>, Certificate)> = None;
        for it in 1..=settings.max_iters {
            let c = self.solve(&(&q + (&z - &u) * self.rho));
            for j in 0..n {
                let v = c[j] + u[j];
                let zj = if j == i { 0.0 } else { soft(v, thresh) };
                u[j] = v - zj;
                z[j] = zj;
            }
            if it % CHECK_EVERY != 0 && it != settings.max_iters {
                continue;
            }
            let coef = sparse(&z);
            let support: Vec<usize> = coef.iter().map(|&(j, _)| j).collect();
            let cert = self.certify(i, lambda, &coef);
            if cert.accepts(tol) {
                return Ok((finish(coef, cert, it, true), WarmStart { z, u }));
            }
            if support == last_support && polished_support.as_ref() != Some(&support) {
                polished_support = Some(support.clone());
                if let Some(pc) = self.polish(i, lambda, &coef, tol) {
                    let pcert = self.certify(i, lambda, &pc);
                    if pcert.accepts(tol) {
                        let mut zp = DVector::zeros(n);
                        for &(j, v) in &pc {
                            zp[j] = v;
                        }
                        return Ok((finish(pc, pcert, it, true), WarmStart { z: zp, u }));
                    }
                }
            }
            last_support = support;
            if best.as_ref().is_none_or(|(_, b)| cert.kkt < b.kkt) {
                best = Some((coef, cert));
            }
        }
        let (coef, cert) = best.expect("at least one certificate check");
        Ok((finish(coef, cert, settings.max_iters, false), WarmStart { z, u }))
    }
}
