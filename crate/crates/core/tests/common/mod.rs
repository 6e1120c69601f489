//! Shared test oracles and instance builders.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ssc_core::data::{normalize_columns, DataMatrix, NormalizedDataMatrix};
use ssc_core::rng;

pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut g = rng::stream(seed, 7);
    DMatrix::from_fn(rows, cols, |_, _| rng::normal(&mut g))
}

pub fn unit_columns(rows: usize, cols: usize, seed: u64) -> NormalizedDataMatrix<f64> {
    normalize_columns(&DataMatrix::new(gaussian_matrix(rows, cols, seed)).unwrap()).unwrap()
}

/// Exact Lasso minimizer of `½‖x_i − X₋ᵢc‖² + λ‖c‖₁` by enumerating sign
/// patterns. Only for N ≤ 12.
pub fn lasso_by_enumeration(x: &DMatrix<f64>, i: usize, lambda: f64) -> DVector<f64> {
    let n = x.ncols();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let m = others.len();
    let target = x.column(i).clone_owned();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut signs = vec![0.0; m];
        let mut c = code;
        for s in signs.iter_mut() {
            *s = [0.0, 1.0, -1.0][c % 3];
            c /= 3;
        }
        let support: Vec<usize> = (0..m).filter(|&t| signs[t] != 0.0).collect();
        if support.len() > x.nrows() {
            continue;
        }
        let mut coef = DVector::zeros(n);
        if !support.is_empty() {
            let cols: Vec<usize> = support.iter().map(|&t| others[t]).collect();
            let xs = x.select_columns(cols.iter());
            let g = xs.tr_mul(&xs);
            let mut b = xs.tr_mul(&target);
            for (k, &t) in support.iter().enumerate() {
                b[k] -= lambda * signs[t];
            }
            let Some(lu) = g.lu().solve(&b) else { continue };
            if support.iter().zip(lu.iter()).any(|(&t, &v)| v * signs[t] <= 0.0) {
                continue;
            }
            for (k, &j) in cols.iter().enumerate() {
                coef[j] = lu[k];
            }
        }
        let r = &target - x * &coef;
        let grad = x.tr_mul(&r);
        let ok = others
            .iter()
            .all(|&j| coef[j] != 0.0 || grad[j].abs() <= lambda + 1e-10);
        if ok {
            let obj = 0.5 * r.norm_squared() + lambda * coef.iter().map(|v| v.abs()).sum::<f64>();
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, coef));
            }
        }
    }
    best.expect("Lasso always has a minimizer").1
}

/// `min ‖c‖₁ s.t. X₋ᵢc = x_i` by enumerating basic solutions.
pub fn l1_min_by_enumeration(x: &DMatrix<f64>, i: usize) -> Option<(f64, DVector<f64>)> {
    let n = x.ncols();
    let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let target = x.column(i).clone_owned();
    let rank = x.nrows().min(others.len());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << others.len()) {
        if mask.count_ones() as usize > rank {
            continue;
        }
        let cols: Vec<usize> = (0..others.len())
            .filter(|t| mask & (1 << t) != 0)
            .map(|t| others[t])
            .collect();
        let xs = x.select_columns(cols.iter());
        let svd = xs.clone().svd(true, true);
        if svd.singular_values.iter().any(|&s| s < 1e-9) {
            continue;
        }
        let Ok(c) = svd.solve(&target, 1e-12) else { continue };
        if (&xs * &c - &target).norm() > 1e-9 {
            continue;
        }
        let l1: f64 = c.iter().map(|v| v.abs()).sum();
        if best.as_ref().is_none_or(|(b, _)| l1 < *b - 1e-12) {
            let mut full = DVector::zeros(n);
            for (k, &j) in cols.iter().enumerate() {
                full[j] = c[k];
            }
            best = Some((l1, full));
        }
    }
    best
}

/// Minimizes the factor-2 objective `‖x_i − X₋ᵢc‖² + 2λ‖c‖₁` by accelerated
/// proximal gradient, independent of the library's solver.
pub fn lasso_by_fista(x: &DMatrix<f64>, i: usize, lambda: f64, iters: usize) -> DVector<f64> {
    let n = x.ncols();
    let target = x.column(i).clone_owned();
    let lip = 2.0 * x.tr_mul(x).symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let mut c = DVector::<f64>::zeros(n);
    let mut y = c.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let grad = x.tr_mul(&(x * &y - &target)) * 2.0;
        let mut next = &y - grad * step;
        for j in 0..n {
            let v = next[j];
            next[j] = if j == i { 0.0 } else { v.signum() * (v.abs() - 2.0 * lambda * step).max(0.0) };
        }
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        y = &next + (&next - &c) * ((t - 1.0) / tn);
        c = next;
        t = tn;
    }
    c
}

/// Points drawn uniformly from the unit sphere of a subspace.
pub fn points_on(basis: &DMatrix<f64>, n: usize, seed: u64) -> DMatrix<f64> {
    let g = gaussian_matrix(basis.ncols(), n, seed);
    let mut y = basis * g;
    for mut c in y.column_iter_mut() {
        let nrm = c.norm();
        c /= nrm;
    }
    y
}

/// Leave-one-out inradius by direction sampling: `min_i min_w max_{j≠i} |⟨a_j, w⟩|`
/// over `n_dirs` unit directions in `ℝʳ` (coordinates `a`, `r × n`), followed by
/// a random compass search around the best directions.
pub fn inradius_by_sampling(a: &DMatrix<f64>, n_dirs: usize) -> f64 {
    let (r, n) = a.shape();
    let loo_value = |w: &DVector<f64>, skip: usize| -> f64 {
        let w = w.normalize();
        (0..n)
            .filter(|&j| j != skip)
            .map(|j| a.column(j).dot(&w).abs())
            .fold(0.0, f64::max)
    };
    let dirs: Vec<DVector<f64>> = match r {
        1 => vec![DVector::from_element(1, 1.0)],
        2 => (0..n_dirs)
            .map(|t| {
                let th = std::f64::consts::PI * t as f64 / n_dirs as f64;
                DVector::from_vec(vec![th.cos(), th.sin()])
            })
            .collect(),
        3 => {
            // Fibonacci lattice on the sphere
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..n_dirs)
                .map(|t| {
                    let z = 1.0 - 2.0 * (t as f64 + 0.5) / n_dirs as f64;
                    let rad = (1.0 - z * z).sqrt();
                    let th = golden * t as f64;
                    DVector::from_vec(vec![rad * th.cos(), rad * th.sin(), z])
                })
                .collect()
        }
        _ => {
            let mut g = rng::stream(77, 0);
            (0..n_dirs)
                .map(|_| DVector::from_vec(rng::normals::<f64, _>(&mut g, r)).normalize())
                .collect()
        }
    };
    let mut g = rng::stream(78, 0);
    let mut overall = f64::INFINITY;
    for skip in 0..n {
        let mut scored: Vec<(f64, usize)> = dirs
            .iter()
            .enumerate()
            .map(|(t, w)| (loo_value(w, skip), t))
            .collect();
        scored.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(v0, t) in scored.iter().take(10) {
            let mut w = dirs[t].clone();
            let mut best = v0;
            let mut step = 0.05;
            if r > 1 {
                while step > 1e-10 {
                    let mut improved = false;
                    for _ in 0..24 {
                        let d = DVector::from_vec(rng::normals::<f64, _>(&mut g, r));
                        let cand = (&w + d.normalize() * step).normalize();
                        let v = loo_value(&cand, skip);
                        if v < best {
                            best = v;
                            w = cand;
                            improved = true;
                        }
                    }
                    if !improved {
                        step *= 0.5;
                    }
                }
            }
            overall = overall.min(best);
        }
    }
    overall
}
