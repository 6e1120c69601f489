//! Spectral clustering on the similarity graph `|C| + |C|ᵀ` and the
//! evaluation metrics (clustering error, RelViolation, SDP and SEP).

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Labels, SelfRepresentation};
use crate::error::{Error, Result};
use crate::{rng, Real};

pub const KMEANS_RESTARTS: usize = 50;
pub const KMEANS_ITERS: usize = 300;
/// Default per-column relative tolerance below which a coefficient counts as zero.
pub const ZERO_TOL: f64 = 1e-8;

/// Symmetric, nonnegative weights with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    w: DMatrix<f64>,
}

impl SimilarityGraph {
    /// Symmetrizes `(W + Wᵀ)/2` after checking entries are finite and nonnegative.
    pub fn from_weights(w: DMatrix<f64>) -> Result<Self> {
        if w.nrows() != w.ncols() {
            return Err(Error::BadDimensions(format!(
                "similarity must be square, got {}x{}",
                w.nrows(),
                w.ncols()
            )));
        }
        for ((i, j), &v) in w.iter().enumerate().map(|(t, v)| ((t % w.nrows(), t / w.nrows()), v)) {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
        let mut s = (&w + w.transpose()) * 0.5;
        s.fill_diagonal(0.0);
        Ok(Self { w: s })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn degrees(&self) -> Vec<f64> {
        self.w.column_iter().map(|c| c.sum()).collect()
    }

    pub fn isolated_vertices(&self) -> usize {
        self.degrees().iter().filter(|&&d| d == 0.0).count()
    }

    /// `L_sym = I − D^{-1/2} W D^{-1/2}`, with zero scaling on isolated rows.
    pub fn normalized_laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let inv_sqrt: Vec<f64> = self
            .degrees()
            .iter()
            .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
            .collect();
        let mut l = DMatrix::from_fn(n, n, |i, j| -inv_sqrt[i] * self.w[(i, j)] * inv_sqrt[j]);
        for i in 0..n {
            l[(i, i)] += 1.0;
        }
        l
    }
}

/// `W = |C| + |C|ᵀ`.
pub fn build_similarity<T: Real>(c: &SelfRepresentation<T>) -> SimilarityGraph {
    let n = c.n();
    let mut w = DMatrix::zeros(n, n);
    for (i, j, v) in c.triplets() {
        let a = v.as_f64().abs();
        w[(i, j)] += a;
        w[(j, i)] += a;
    }
    SimilarityGraph { w }
}

/// Labels with diagnostics from [`spectral_cluster_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralOutcome {
    pub labels: Labels,
    /// Zero-degree vertices; their embedding rows are zero.
    pub isolated: usize,
    /// More than `N − k` isolated vertices.
    pub degenerate: bool,
    /// The `k` smallest Laplacian eigenvalues, ascending.
    pub eigenvalues: Vec<f64>,
    pub inertia: f64,
}

impl SpectralOutcome {
    pub fn warning(&self) -> Option<Error> {
        self.degenerate.then(|| Error::DegenerateGraph {
            zero_rows: self.isolated,
            n: self.labels.len(),
            k: self.labels.k(),
        })
    }
}

/// Normalized-cut clustering into `k` groups.
pub fn spectral_cluster(w: &SimilarityGraph, k: usize, seed: u64) -> Result<Labels> {
    spectral_cluster_detailed(w, k, seed).map(|o| o.labels)
}

pub fn spectral_cluster_detailed(w: &SimilarityGraph, k: usize, seed: u64) -> Result<SpectralOutcome> {
    let n = w.n();
    if k == 0 || n < k {
        return Err(Error::BadParameter(format!("need 1 <= k <= N, got k={k}, N={n}")));
    }
    let isolated = w.isolated_vertices();
    let eig = SymmetricEigen::new(w.normalized_laplacian());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let mut emb = DMatrix::from_fn(n, k, |i, j| eig.eigenvectors[(i, order[j])]);
    for mut row in emb.row_iter_mut() {
        let nrm = row.norm();
        if nrm > 0.0 {
            row /= nrm;
        }
    }
    // isolated vertices get exactly zero rows
    for (i, d) in w.degrees().iter().enumerate() {
        if *d == 0.0 {
            emb.row_mut(i).fill(0.0);
        }
    }
    let (assign, inertia) = kmeans(&emb, k, seed, KMEANS_RESTARTS, KMEANS_ITERS);
    Ok(SpectralOutcome {
        labels: Labels::new(assign, k)?,
        isolated,
        degenerate: isolated > n - k,
        eigenvalues: order[..k].iter().map(|&t| eig.eigenvalues[t]).collect(),
        inertia,
    })
}

/// Best of `restarts` Lloyd runs with k-means++ seeding; ties go to the
/// lower restart index. Every cluster is non-empty.
pub fn kmeans(points: &DMatrix<f64>, k: usize, seed: u64, restarts: usize, iters: usize) -> (Vec<usize>, f64) {
    let runs: Vec<(f64, Vec<usize>)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|t| {
            let mut g = rng::stream(seed, t as u64);
            let (a, inertia) = lloyd(points, k, &mut g, iters);
            (inertia, a)
        })
        .collect();
    let (inertia, assign) = runs
        .into_iter()
        .reduce(|best, cur| if cur.0 < best.0 { cur } else { best })
        .expect("at least one restart");
    (assign, inertia)
}

fn sq_dist(points: &DMatrix<f64>, i: usize, c: &DVector<f64>) -> f64 {
    points.row(i).iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn lloyd(points: &DMatrix<f64>, k: usize, g: &mut impl Rng, iters: usize) -> (Vec<usize>, f64) {
    let n = points.nrows();
    let row = |i: usize| DVector::from_iterator(points.ncols(), points.row(i).iter().copied());
    // k-means++ seeding
    let mut centers = vec![row(g.random_range(0..n))];
    let mut dist: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut u = g.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in dist.iter().enumerate() {
                if u < d {
                    pick = i;
                    break;
                }
                u -= d;
            }
            pick
        } else {
            g.random_range(0..n)
        };
        let c = row(pick);
        for (i, d) in dist.iter_mut().enumerate() {
            *d = d.min(sq_dist(points, i, &c));
        }
        centers.push(c);
    }
    let mut assign = vec![0usize; n];
    for it in 0..iters {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let best = nearest(points, i, &centers).0;
            if best != *a || it == 0 {
                changed |= best != *a;
                *a = best;
            }
        }
        fill_empty(points, &mut assign, &centers, k);
        let new_centers = centroids(points, &assign, k);
        if !changed && it > 0 {
            centers = new_centers;
            break;
        }
        centers = new_centers;
    }
    let inertia = (0..n).map(|i| sq_dist(points, i, &centers[assign[i]])).sum();
    (assign, inertia)
}

fn nearest(points: &DMatrix<f64>, i: usize, centers: &[DVector<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, ctr) in centers.iter().enumerate() {
        let d = sq_dist(points, i, ctr);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Moves the point farthest from its center into each empty cluster.
fn fill_empty(points: &DMatrix<f64>, assign: &mut [usize], centers: &[DVector<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assign.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else { return };
        let donor = (0..assign.len())
            .filter(|&i| counts[assign[i]] > 1)
            .max_by(|&a, &b| {
                sq_dist(points, a, &centers[assign[a]])
                    .total_cmp(&sq_dist(points, b, &centers[assign[b]]))
                    .then(b.cmp(&a))
            })
            .expect("N >= k leaves a cluster with two members");
        assign[donor] = empty;
    }
}

fn centroids(points: &DMatrix<f64>, assign: &[usize], k: usize) -> Vec<DVector<f64>> {
    let mut sums = vec![DVector::zeros(points.ncols()); k];
    let mut counts = vec![0usize; k];
    for (i, &a) in assign.iter().enumerate() {
        for (s, v) in sums[a].iter_mut().zip(points.row(i).iter()) {
            *s += v;
        }
        counts[a] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s / c.max(1) as f64)
        .collect()
}

/// Maximum-weight assignment on a square matrix (Hungarian method with
/// potentials). Returns `col[row]`.
pub fn max_weight_matching(weights: &DMatrix<f64>) -> Vec<usize> {
    let n = weights.nrows().max(weights.ncols());
    let maxw = weights.iter().copied().fold(0.0, f64::max);
    // padded square cost matrix, 1-based as in the classical formulation
    let cost = |i: usize, j: usize| -> f64 {
        if i < weights.nrows() && j < weights.ncols() {
            maxw - weights[(i, j)]
        } else {
            maxw
        }
    };
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            col[p[j] - 1] = j - 1;
        }
    }
    col
}

/// `k_pred × k_truth` table of co-occurrence counts.
pub fn contingency(pred: &Labels, truth: &Labels) -> Result<DMatrix<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    let mut t = DMatrix::zeros(pred.k(), truth.k());
    for (&a, &b) in pred.assignments().iter().zip(truth.assignments()) {
        t[(a, b)] += 1.0;
    }
    Ok(t)
}

/// Fraction of points mis-clustered under the best matching of labels.
pub fn clustering_error(pred: &Labels, truth: &Labels) -> Result<f64> {
    const MAX_K: usize = 64;
    if pred.k() > MAX_K || truth.k() > MAX_K {
        return Err(Error::BadParameter(format!("at most {MAX_K} clusters supported")));
    }
    let table = contingency(pred, truth)?;
    if pred.is_empty() {
        return Ok(0.0);
    }
    let matching = max_weight_matching(&table);
    let agree: f64 = matching
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < table.nrows() && j < table.ncols())
        .map(|(i, &j)| table[(i, j)])
        .sum();
    Ok(1.0 - agree / pred.len() as f64)
}

/// Cross-cluster over in-cluster coefficient mass; `0/0 = 0`, `x/0 = ∞`.
pub fn rel_violation<T: Real>(c: &SelfRepresentation<T>, truth: &Labels) -> Result<f64> {
    if c.n() != truth.len() {
        return Err(Error::LengthMismatch(c.n(), truth.len()));
    }
    let (mut inside, mut outside) = (0.0, 0.0);
    for (i, j, v) in c.triplets() {
        let a = v.as_f64().abs();
        if truth.get(i) == truth.get(j) {
            inside += a;
        } else {
            outside += a;
        }
    }
    Ok(if outside == 0.0 {
        0.0
    } else if inside == 0.0 {
        f64::INFINITY
    } else {
        outside / inside
    })
}

/// Subspace detection checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionCheck {
    pub sdp: bool,
    pub sep: bool,
    pub trivial_columns: usize,
}

/// An entry counts when `|c_ij| > zero_tol · max_i |c_ij|` within its column.
pub fn check_sdp<T: Real>(c: &SelfRepresentation<T>, truth: &Labels, zero_tol: f64) -> Result<DetectionCheck> {
    if c.n() != truth.len() {
        return Err(Error::LengthMismatch(c.n(), truth.len()));
    }
    if !(zero_tol >= 0.0) {
        return Err(Error::BadParameter(format!("zero_tol must be >= 0, got {zero_tol}")));
    }
    let mut sep = true;
    let mut trivial = 0;
    for j in 0..c.n() {
        let col = c.column(j);
        let max = col.iter().fold(0.0f64, |m, &(_, v)| m.max(v.as_f64().abs()));
        let mut any = false;
        for &(i, v) in col {
            let a = v.as_f64().abs();
            if a > 0.0 && a >= zero_tol * max {
                any = true;
                if truth.get(i) != truth.get(j) {
                    sep = false;
                }
            }
        }
        if !any {
            trivial += 1;
        }
    }
    Ok(DetectionCheck {
        sdp: sep && trivial == 0,
        sep,
        trivial_columns: trivial,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub clustering_error: f64,
    /// `None` in JSON stands for `+∞`.
    #[serde(with = "crate::clustering::infinite_as_null")]
    pub rel_violation: f64,
    pub sdp_holds: bool,
    pub sep_holds: bool,
    pub trivial_columns: usize,
}

/// All metrics of a predicted clustering and its coefficient matrix.
pub fn evaluate<T: Real>(
    c: &SelfRepresentation<T>,
    pred: &Labels,
    truth: &Labels,
    zero_tol: f64,
) -> Result<EvaluationReport> {
    let det = check_sdp(c, truth, zero_tol)?;
    Ok(EvaluationReport {
        clustering_error: clustering_error(pred, truth)?,
        rel_violation: rel_violation(c, truth)?,
        sdp_holds: det.sdp,
        sep_holds: det.sep,
        trivial_columns: det.trivial_columns,
    })
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_of_single_entry() {
        let c = SelfRepresentation::from_triplets(3, &[(0, 1, -2.0)]).unwrap();
        let w = build_similarity(&c);
        assert_eq!(w.weights()[(0, 1)], 2.0);
        assert_eq!(w.weights()[(1, 0)], 2.0);
        assert_eq!(w.weights().sum(), 4.0);
    }

    #[test]
    fn hungarian_on_small_table() {
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 5.0, 0.0, 4.0, 0.0, 0.0, 0.0, 0.0, 3.0]);
        assert_eq!(max_weight_matching(&t), vec![1, 0, 2]);
    }

    #[test]
    fn rectangular_matching_is_padded() {
        let t = DMatrix::from_row_slice(2, 3, &[0.0, 2.0, 1.0, 3.0, 0.0, 0.0]);
        let m = max_weight_matching(&t);
        assert_eq!(&m[..2], &[1, 0]);
    }

    #[test]
    fn infinity_round_trips_through_json() {
        let r = EvaluationReport {
            clustering_error: 0.0,
            rel_violation: f64::INFINITY,
            sdp_holds: false,
            sep_holds: false,
            trivial_columns: 3,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("null"));
        let back: EvaluationReport = serde_json::from_str(&s).unwrap();
        assert_eq!(back, r);
    }
}
