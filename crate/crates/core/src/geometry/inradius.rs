//! Inradius of the symmetrized convex hull `Q(A) = conv(±a_1, …, ±a_n)`.
//!
//! Inside the `r`-dimensional span of the points,
//! `r(Q(A)) = min_{‖w‖=1} max_j |⟨a_j, w⟩| = 1 / max{‖y‖ : |⟨a_j, y⟩| ≤ 1 ∀j}`,
//! i.e. one over the circumradius of the polar polytope, which is attained
//! at a vertex. Small instances enumerate every vertex; larger ones run a
//! multi-start vertex ascent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::{rng, Real};

/// Relative singular-value threshold for the rank check.
pub const RANK_TOL: f64 = 1e-8;
/// Candidate-vertex budget (subsets × sign patterns) for exact enumeration.
pub const EXACT_BUDGET: f64 = 4e5;
/// Restarts of the vertex ascent.
pub const RESTARTS: usize = 200;
const FEAS_TOL: f64 = 1e-9;

/// Options for [`inradius_with`].
#[derive(Debug, Clone, Copy)]
pub struct InradiusOptions {
    pub exact_budget: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for InradiusOptions {
    fn default() -> Self {
        Self {
            exact_budget: EXACT_BUDGET,
            restarts: RESTARTS,
            seed: 0x1A7D,
        }
    }
}

/// Leave-one-out inradius `min_i r(Q(points₋ᵢ))` of points spanning `r` dimensions.
pub fn inradius<T: Real>(points: &DMatrix<T>, r: usize) -> Result<f64> {
    inradius_with(points, r, InradiusOptions::default())
}

/// Inradius `r(Q(points))` without leave-one-out.
pub fn symmetric_hull_inradius<T: Real>(points: &DMatrix<T>, r: usize) -> Result<f64> {
    let a = chart(points, r)?;
    let polar = Polar::new(a);
    let opts = InradiusOptions::default();
    let best = if polar.enumeration_cost() <= opts.exact_budget {
        polar.enumerate(false)[0]
    } else {
        polar.ascend(None, &opts)
    };
    Ok(1.0 / best)
}

pub fn inradius_with<T: Real>(points: &DMatrix<T>, r: usize, opts: InradiusOptions) -> Result<f64> {
    let a = chart(points, r)?;
    let polar = Polar::new(a);
    let best = if polar.enumeration_cost() <= opts.exact_budget {
        polar.enumerate(true)
    } else {
        polar.loo_ascent(&opts)
    };
    let worst = best.into_iter().fold(0.0f64, f64::max);
    Ok(if worst.is_finite() { 1.0 / worst } else { 0.0 })
}

/// Coordinates of the points in an orthonormal basis of their span (`r × n`).
fn chart<T: Real>(points: &DMatrix<T>, r: usize) -> Result<DMatrix<f64>> {
    let (d, n) = points.shape();
    if r == 0 || r > d {
        return Err(Error::BadDimensions(format!("subspace dimension {r} with ambient {d}")));
    }
    if n < r {
        return Err(Error::RankDeficient { expected: r, found: n });
    }
    let p = points.map(|v| v.as_f64());
    let svd = p.clone().svd(true, false);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values[order[0]];
    let rank = order
        .iter()
        .filter(|&&t| svd.singular_values[t] > RANK_TOL * smax.max(f64::MIN_POSITIVE))
        .count();
    if rank < r {
        return Err(Error::RankDeficient { expected: r, found: rank });
    }
    if rank > r {
        return Err(Error::BadDimensions(format!(
            "points span {rank} dimensions, more than the stated {r}"
        )));
    }
    let u = svd.u.expect("left singular vectors requested");
    let basis = DMatrix::from_fn(d, r, |i, j| u[(i, order[j])]);
    Ok(basis.tr_mul(&p))
}

/// Polar polytope `{y : |⟨a_j, y⟩| ≤ 1}` with constraints deduplicated up to sign.
struct Polar {
    r: usize,
    /// distinct constraint rows, `m × r`
    rows: DMatrix<f64>,
    /// for each original point, the index of its distinct row
    group: Vec<usize>,
    /// multiplicity of each distinct row
    mult: Vec<usize>,
}

impl Polar {
    fn new(a: DMatrix<f64>) -> Self {
        let (r, n) = a.shape();
        let mut rows: Vec<DVector<f64>> = Vec::new();
        let mut group = Vec::with_capacity(n);
        let mut mult = Vec::new();
        for j in 0..n {
            let col = a.column(j).clone_owned();
            let scale = col.amax().max(1.0);
            let found = rows.iter().position(|q| {
                (q - &col).amax() <= 1e-12 * scale || (q + &col).amax() <= 1e-12 * scale
            });
            match found {
                Some(g) => {
                    group.push(g);
                    mult[g] += 1;
                }
                None => {
                    group.push(rows.len());
                    rows.push(col);
                    mult.push(1);
                }
            }
        }
        let m = rows.len();
        let rows = DMatrix::from_fn(m, r, |i, j| rows[i][j]);
        Self { r, rows, group, mult }
    }

    fn m(&self) -> usize {
        self.rows.nrows()
    }

    fn enumeration_cost(&self) -> f64 {
        let (m, r) = (self.m() as f64, self.r as i32);
        let mut c = 1.0;
        for t in 0..self.r {
            c *= (m - t as f64) / (t as f64 + 1.0);
        }
        c.max(0.0) * 2f64.powi(r - 1) * m
    }

    /// Whether the rows other than `skip` still span `ℝʳ`.
    fn spans_without(&self, skip: Option<usize>) -> bool {
        let keep: Vec<usize> = (0..self.m()).filter(|&g| Some(g) != skip).collect();
        if keep.len() < self.r {
            return false;
        }
        let sub = self.rows.select_rows(keep.iter());
        let sv = sub.singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        sv.iter().filter(|&&s| s > RANK_TOL * smax.max(f64::MIN_POSITIVE)).count() >= self.r
    }

    /// Max vertex norm per point (leave-one-out) or, with `loo = false`, a
    /// single value for the full set. Entries are `∞` for unbounded polytopes.
    fn enumerate(&self, loo: bool) -> Vec<f64> {
        let (m, r) = (self.m(), self.r);
        let mut best_all = 0.0f64;
        let mut best_without = vec![0.0f64; m];
        let mut subset: Vec<usize> = (0..r).collect();
        let mut signs = vec![1.0; r];
        loop {
            let mtx = self.rows.select_rows(subset.iter());
            if let Some(lu) = Some(mtx.lu()).filter(|lu| lu.determinant().abs() > 1e-14) {
                for pattern in 0..(1usize << (r - 1)) {
                    signs[0] = 1.0;
                    for (t, s) in signs.iter_mut().enumerate().skip(1) {
                        *s = if pattern & (1 << (t - 1)) != 0 { -1.0 } else { 1.0 };
                    }
                    let Some(y) = lu.solve(&DVector::from_column_slice(&signs)) else { continue };
                    let vals = &self.rows * &y;
                    let norm = y.norm();
                    let mut violated = None;
                    let mut count = 0;
                    for (g, v) in vals.iter().enumerate() {
                        if v.abs() > 1.0 + FEAS_TOL {
                            count += 1;
                            violated = Some(g);
                            if count > 1 {
                                break;
                            }
                        }
                    }
                    match (count, violated) {
                        (0, _) => best_all = best_all.max(norm),
                        (1, Some(g)) if loo => best_without[g] = best_without[g].max(norm),
                        _ => {}
                    }
                }
            }
            if !next_subset(&mut subset, m) {
                break;
            }
        }
        if !loo {
            return vec![best_all];
        }
        self.per_point(|g| {
            if !self.spans_without(Some(g)) {
                f64::INFINITY
            } else {
                best_without[g].max(best_all)
            }
        }, best_all)
    }

    /// Expands per-group values to per-point values; duplicated points leave
    /// the polytope unchanged.
    fn per_point(&self, f: impl Fn(usize) -> f64, full: f64) -> Vec<f64> {
        self.group
            .iter()
            .map(|&g| if self.mult[g] > 1 { full } else { f(g) })
            .collect()
    }

    fn loo_ascent(&self, opts: &InradiusOptions) -> Vec<f64> {
        let full = self.ascend(None, opts);
        let per_group: Vec<f64> = (0..self.m())
            .map(|g| {
                if self.mult[g] > 1 {
                    full
                } else if !self.spans_without(Some(g)) {
                    f64::INFINITY
                } else {
                    self.ascend(Some(g), opts).max(full)
                }
            })
            .collect();
        self.per_point(|g| per_group[g], full)
    }

    /// Multi-start vertex ascent for `max ‖y‖` over the polar polytope with
    /// constraint `skip` removed.
    fn ascend(&self, skip: Option<usize>, opts: &InradiusOptions) -> f64 {
        let r = self.r;
        let active_rows: Vec<usize> = (0..self.m()).filter(|&g| Some(g) != skip).collect();
        let rows = self.rows.select_rows(active_rows.iter());
        let mut g = rng::stream(opts.seed, skip.map_or(0, |s| s as u64 + 1));
        let mut best = 0.0f64;
        for _ in 0..opts.restarts {
            let u = DVector::from_vec(rng::normals::<f64, _>(&mut g, r));
            match vertex_ascent(&rows, u) {
                Some(v) => best = best.max(v),
                None => return f64::INFINITY,
            }
        }
        best
    }
}

/// Advances `subset` (sorted indices into `0..m`) to the next combination.
fn next_subset(subset: &mut [usize], m: usize) -> bool {
    let r = subset.len();
    let mut t = r;
    while t > 0 {
        t -= 1;
        if subset[t] < m - r + t {
            subset[t] += 1;
            for s in t + 1..r {
                subset[s] = subset[s - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Largest `t ≥ 0` with `|rows·(y + t d)| ≤ 1`, and the row that binds.
fn ratio_test(rows: &DMatrix<f64>, y: &DVector<f64>, d: &DVector<f64>, exclude: &[usize]) -> Option<(f64, usize, f64)> {
    let ry = rows * y;
    let rd = rows * d;
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..rows.nrows() {
        if exclude.contains(&j) || rd[j].abs() < 1e-14 {
            continue;
        }
        let s = rd[j].signum();
        let t = ((s - ry[j]) / rd[j]).max(0.0);
        if best.is_none_or(|(bt, _, _)| t < bt) {
            best = Some((t, j, s));
        }
    }
    best
}

/// From the ray through `u`, walks to a vertex and then pivots to adjacent
/// vertices while the norm increases. Returns the final vertex norm, or
/// `None` if an unbounded edge is found.
fn vertex_ascent(rows: &DMatrix<f64>, u: DVector<f64>) -> Option<f64> {
    let r = rows.ncols();
    let scale = (rows * &u).amax();
    if scale == 0.0 {
        return None;
    }
    let mut y = u / scale;
    // active constraints: (row, sign)
    let mut active: Vec<(usize, f64)> = Vec::new();
    let vals = rows * &y;
    let j = vals.iamax();
    active.push((j, vals[j].signum()));
    // grow the active set to r constraints
    while active.len() < r {
        let a = rows.select_rows(active.iter().map(|(j, _)| j));
        let proj = nullspace_projection(&a, r);
        let mut d = &proj * &y;
        if d.norm() < 1e-12 {
            // y is orthogonal to the null space; take any null direction
            let k = (0..r).max_by(|&p, &q| proj.column(p).norm().total_cmp(&proj.column(q).norm()))?;
            d = proj.column(k).clone_owned();
            if d.norm() < 1e-12 {
                return None;
            }
        }
        let excl: Vec<usize> = active.iter().map(|(j, _)| *j).collect();
        let (t, j, s) = ratio_test(rows, &y, &d, &excl)?;
        y += d * t;
        active.push((j, s));
    }
    // pivot between adjacent vertices
    let mut norm = y.norm();
    for _ in 0..10_000 {
        let m = DMatrix::from_fn(r, r, |i, k| rows[(active[i].0, k)]);
        let inv = m.try_inverse()?;
        let mut improved = false;
        for k in 0..r {
            // leave constraint k, moving to its interior side
            let d = inv.column(k) * (-active[k].1);
            // the leaving row stays in the test: its opposite face can bind
            let excl: Vec<usize> = active
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, (j, _))| *j)
                .collect();
            let Some((t, j, s)) = ratio_test(rows, &y, &d.clone_owned(), &excl) else {
                return None;
            };
            let cand = &y + d * t;
            let cn = cand.norm();
            if cn > norm * (1.0 + 1e-12) {
                y = cand;
                norm = cn;
                active[k] = (j, s);
                improved = true;
                break;
            }
        }
        if !improved {
            break;
        }
    }
    Some(norm)
}

/// Orthogonal projector onto the null space of the rows of `a` (`r × r`).
fn nullspace_projection(a: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let mut p = DMatrix::identity(r, r);
    if a.nrows() == 0 {
        return p;
    }
    let q = a.transpose().qr().q();
    let q = q.columns(0, a.nrows().min(r));
    p -= &q * q.transpose();
    p
}
