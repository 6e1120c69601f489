//! Random dimensionality-reduction operators `ℝᵈ → ℝᵖ`.
//!
//! Four families are provided, all regenerated deterministically from
//! `(kind, d, p, seed)`:
//!
//! | kind          | map                                                   |
//! |---------------|-------------------------------------------------------|
//! | `Gaussian`    | dense `p × d`, entries `N(0, 1/p)`                    |
//! | `UniformRows` | `p` rows `√(d/p)·e_j`, `j` uniform, with replacement   |
//! | `Fjlt`        | `P·H·D` on the zero-padded input (`H` normalized WHT) |
//! | `Sketch`      | count sketch: `(Sx)_b = Σ_{h(j)=b} s_j x_j`           |

mod bounds;
mod distortion;
mod fwht;

pub use bounds::{
    gaussian_dimension_bound, min_dimension_fjlt, min_dimension_gaussian, min_dimension_sketch,
    min_dimension_uniform, uniform_dimension_bound,
};
pub use distortion::{measure_distortion, subspace_distortion, DistortionReport, SubspaceDistortion};
pub use fwht::fwht_normalized;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::rng;
use crate::Real;

/// Dense Gaussian operators with at most this many entries are kept in memory;
/// larger ones regenerate their rows from the seed on every `apply`.
pub const GAUSSIAN_CACHE_LIMIT: usize = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    Gaussian,
    UniformRows,
    Fjlt,
    Sketch,
}

impl ProjectionKind {
    pub fn name(self) -> &'static str {
        match self {
            ProjectionKind::Gaussian => "gaussian",
            ProjectionKind::UniformRows => "uniform_rows",
            ProjectionKind::Fjlt => "fjlt",
            ProjectionKind::Sketch => "sketch",
        }
    }

    fn stream_base(self) -> u64 {
        match self {
            ProjectionKind::Gaussian => 0x1000_0000,
            ProjectionKind::UniformRows => 0x2000_0000,
            ProjectionKind::Fjlt => 0x3000_0000,
            ProjectionKind::Sketch => 0x4000_0000,
        }
    }
}

/// Sparsity of the FJLT's `P` factor: nonzero probability
/// `q = min(1, c·ln²(N)/d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FjltParams {
    #[serde(default = "default_sparsity_c")]
    pub sparsity_c: f64,
    /// Number of points the operator will be applied to; `None` uses `d`.
    #[serde(default)]
    pub n_points: Option<usize>,
}

fn default_sparsity_c() -> f64 {
    1.0
}

impl Default for FjltParams {
    fn default() -> Self {
        Self {
            sparsity_c: 1.0,
            n_points: None,
        }
    }
}

impl FjltParams {
    pub fn density(&self, d: usize) -> f64 {
        let n = self.n_points.unwrap_or(d).max(2) as f64;
        (self.sparsity_c * n.ln().powi(2) / d as f64).min(1.0)
    }
}

/// Serializable identity of an operator; its state is regenerated from the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionDescriptor {
    pub kind: ProjectionKind,
    pub d: usize,
    pub p: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fjlt: Option<FjltParams>,
}

#[derive(Debug, Clone)]
enum State<T: Real> {
    Gaussian { cached: Option<DMatrix<T>> },
    UniformRows { rows: Vec<usize>, scale: T },
    Fjlt {
        padded: usize,
        signs: Vec<T>,
        /// `p` sparse rows over the padded coordinates.
        rows: Vec<Vec<(usize, T)>>,
        params: FjltParams,
    },
    Sketch { buckets: Vec<usize>, signs: Vec<T> },
}

#[derive(Debug, Clone)]
pub struct ProjectionOperator<T: Real> {
    kind: ProjectionKind,
    d: usize,
    p: usize,
    seed: u64,
    state: State<T>,
}

fn check_dims(d: usize, p: usize) -> Result<()> {
    if p < 1 || p >= d {
        return Err(Error::BadDimensions(format!(
            "projection needs 1 <= p < d, got d={d}, p={p}"
        )));
    }
    Ok(())
}

fn gaussian_row<T: Real>(seed: u64, row: usize, d: usize, scale: T) -> Vec<T> {
    let mut r = rng::stream(seed, ProjectionKind::Gaussian.stream_base() + row as u64);
    (0..d).map(|_| rng::normal::<T, _>(&mut r) * scale).collect()
}

/// Dense Gaussian projection with entry variance `1/p`.
pub fn make_gaussian<T: Real>(d: usize, p: usize, seed: u64) -> Result<ProjectionOperator<T>> {
    check_dims(d, p)?;
    let cached = (p * d <= GAUSSIAN_CACHE_LIMIT).then(|| {
        let scale = T::one() / T::of(p as f64).sqrt();
        let mut m = DMatrix::zeros(p, d);
        for i in 0..p {
            for (j, v) in gaussian_row(seed, i, d, scale).into_iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    });
    Ok(ProjectionOperator {
        kind: ProjectionKind::Gaussian,
        d,
        p,
        seed,
        state: State::Gaussian { cached },
    })
}

/// Uniform row sampling with replacement, rows scaled by `√(d/p)`.
pub fn make_uniform_rows<T: Real>(d: usize, p: usize, seed: u64) -> Result<ProjectionOperator<T>> {
    check_dims(d, p)?;
    let mut r = rng::stream(seed, ProjectionKind::UniformRows.stream_base());
    let rows = (0..p).map(|_| r.random_range(0..d)).collect();
    Ok(ProjectionOperator {
        kind: ProjectionKind::UniformRows,
        d,
        p,
        seed,
        state: State::UniformRows {
            rows,
            scale: T::of((d as f64 / p as f64).sqrt()),
        },
    })
}

pub fn make_fjlt<T: Real>(d: usize, p: usize, seed: u64) -> Result<ProjectionOperator<T>> {
    make_fjlt_with(d, p, seed, FjltParams::default())
}

/// FJLT `x ↦ P·H·D·x̂` with explicit sparsity parameters.
pub fn make_fjlt_with<T: Real>(
    d: usize,
    p: usize,
    seed: u64,
    params: FjltParams,
) -> Result<ProjectionOperator<T>> {
    check_dims(d, p)?;
    if !(params.sparsity_c > 0.0) {
        return Err(Error::BadParameter(format!(
            "FJLT sparsity constant must be > 0, got {}",
            params.sparsity_c
        )));
    }
    let padded = d.next_power_of_two();
    let base = ProjectionKind::Fjlt.stream_base();
    let mut r = rng::stream(seed, base);
    let signs = (0..padded).map(|_| rng::sign(&mut r)).collect();
    let q = params.density(d);
    let scale = T::one() / T::of((p as f64 * q).sqrt());
    let rows = (0..p)
        .map(|i| {
            let mut r = rng::stream(seed, base + 1 + i as u64);
            (0..padded)
                .filter_map(|j| {
                    let keep = r.random::<f64>() < q;
                    let g = rng::normal::<T, _>(&mut r);
                    keep.then_some((j, g * scale))
                })
                .collect()
        })
        .collect();
    Ok(ProjectionOperator {
        kind: ProjectionKind::Fjlt,
        d,
        p,
        seed,
        state: State::Fjlt {
            padded,
            signs,
            rows,
            params,
        },
    })
}

/// Count sketch with a uniform hash `[0,d) → [0,p)` and uniform signs.
pub fn make_sketch<T: Real>(d: usize, p: usize, seed: u64) -> Result<ProjectionOperator<T>> {
    check_dims(d, p)?;
    let mut r = rng::stream(seed, ProjectionKind::Sketch.stream_base());
    let mut buckets = Vec::with_capacity(d);
    let mut signs = Vec::with_capacity(d);
    for _ in 0..d {
        buckets.push(r.random_range(0..p));
        signs.push(rng::sign(&mut r));
    }
    Ok(ProjectionOperator {
        kind: ProjectionKind::Sketch,
        d,
        p,
        seed,
        state: State::Sketch { buckets, signs },
    })
}

pub fn make_operator<T: Real>(desc: &ProjectionDescriptor) -> Result<ProjectionOperator<T>> {
    match desc.kind {
        ProjectionKind::Gaussian => make_gaussian(desc.d, desc.p, desc.seed),
        ProjectionKind::UniformRows => make_uniform_rows(desc.d, desc.p, desc.seed),
        ProjectionKind::Fjlt => {
            make_fjlt_with(desc.d, desc.p, desc.seed, desc.fjlt.unwrap_or_default())
        }
        ProjectionKind::Sketch => make_sketch(desc.d, desc.p, desc.seed),
    }
}

impl<T: Real> ProjectionOperator<T> {
    /// Builds a count sketch from explicit hash buckets and signs.
    pub fn sketch_from_parts(p: usize, buckets: Vec<usize>, signs: Vec<T>) -> Result<Self> {
        let d = buckets.len();
        check_dims(d, p)?;
        if signs.len() != d {
            return Err(Error::LengthMismatch(signs.len(), d));
        }
        if buckets.iter().any(|&b| b >= p) {
            return Err(Error::BadParameter("sketch bucket outside [0, p)".into()));
        }
        Ok(Self {
            kind: ProjectionKind::Sketch,
            d,
            p,
            seed: 0,
            state: State::Sketch { buckets, signs },
        })
    }

    pub fn kind(&self) -> ProjectionKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.d
    }

    pub fn output_dim(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn descriptor(&self) -> ProjectionDescriptor {
        let fjlt = match &self.state {
            State::Fjlt { params, .. } => Some(*params),
            _ => None,
        };
        ProjectionDescriptor {
            kind: self.kind,
            d: self.d,
            p: self.p,
            seed: self.seed,
            fjlt,
        }
    }

    /// Row indices sampled by a `UniformRows` operator.
    pub fn sampled_rows(&self) -> Option<&[usize]> {
        match &self.state {
            State::UniformRows { rows, .. } => Some(rows),
            _ => None,
        }
    }

    /// Hash buckets of a `Sketch` operator.
    pub fn sketch_buckets(&self) -> Option<&[usize]> {
        match &self.state {
            State::Sketch { buckets, .. } => Some(buckets),
            _ => None,
        }
    }

    /// `H·D·x̂` for an FJLT operator (the padded, rotated input before sparsification).
    pub fn fjlt_rotate(&self, x: &[T]) -> Option<Vec<T>> {
        match &self.state {
            State::Fjlt { padded, signs, .. } => Some(self.rotate(x, *padded, signs)),
            _ => None,
        }
    }

    fn rotate(&self, x: &[T], padded: usize, signs: &[T]) -> Vec<T> {
        let mut buf = vec![T::zero(); padded];
        for (j, &v) in x.iter().enumerate() {
            buf[j] = v * signs[j];
        }
        fwht_normalized(&mut buf);
        buf
    }

    /// Applies the operator to one vector of length `d`.
    pub fn apply_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: x.len(),
            });
        }
        let xm = DMatrix::from_column_slice(self.d, 1, x);
        Ok(self.apply_matrix(&xm).column(0).iter().copied().collect())
    }

    /// Applies a count sketch or sampling operator to a sparse vector given as
    /// `(index, value)` pairs; cost is proportional to the number of entries.
    pub fn apply_sparse(&self, entries: &[(usize, T)]) -> Result<Vec<T>> {
        if let Some(&(j, _)) = entries.iter().find(|(j, _)| *j >= self.d) {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: j + 1,
            });
        }
        match &self.state {
            State::Sketch { buckets, signs } => {
                let mut out = vec![T::zero(); self.p];
                for &(j, v) in entries {
                    out[buckets[j]] += signs[j] * v;
                }
                Ok(out)
            }
            _ => {
                let mut dense = vec![T::zero(); self.d];
                for &(j, v) in entries {
                    dense[j] += v;
                }
                self.apply_vec(&dense)
            }
        }
    }

    fn apply_matrix(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let n = x.ncols();
        let mut out = DMatrix::zeros(self.p, n);
        match &self.state {
            State::Gaussian { cached } => {
                // the same per-row arithmetic with or without the cache, so both agree exactly
                let scale = T::one() / T::of(self.p as f64).sqrt();
                let rows: Vec<DVector<T>> = (0..self.p)
                    .into_par_iter()
                    .map(|i| {
                        let row: DVector<T> = match cached {
                            Some(m) => m.row(i).transpose(),
                            None => DVector::from_vec(gaussian_row(self.seed, i, self.d, scale)),
                        };
                        x.tr_mul(&row)
                    })
                    .collect();
                for (i, vals) in rows.iter().enumerate() {
                    out.row_mut(i).copy_from(&vals.transpose());
                }
            }
            State::UniformRows { rows, scale } => {
                for (i, &j) in rows.iter().enumerate() {
                    for c in 0..n {
                        out[(i, c)] = x[(j, c)] * *scale;
                    }
                }
            }
            State::Fjlt {
                padded,
                signs,
                rows,
                ..
            } => {
                for c in 0..n {
                    let col: Vec<T> = x.column(c).iter().copied().collect();
                    let rotated = self.rotate(&col, *padded, signs);
                    for (i, row) in rows.iter().enumerate() {
                        out[(i, c)] = row
                            .iter()
                            .fold(T::zero(), |acc, &(j, w)| acc + w * rotated[j]);
                    }
                }
            }
            State::Sketch { buckets, signs } => {
                for c in 0..n {
                    for (j, (&b, &s)) in buckets.iter().zip(signs).enumerate() {
                        let v = x[(j, c)];
                        if v != T::zero() {
                            out[(b, c)] += s * v;
                        }
                    }
                }
            }
        }
        out
    }

    /// `Ψ·M` for an arbitrary `d × m` matrix (e.g. a subspace basis).
    pub fn apply_to_matrix(&self, m: &DMatrix<T>) -> Result<DMatrix<T>> {
        if m.nrows() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: m.nrows(),
            });
        }
        Ok(self.apply_matrix(m))
    }
}

/// Projects every column: returns the `p × N` matrix `ΨX`.
pub fn apply<T: Real>(op: &ProjectionOperator<T>, x: &DataMatrix<T>) -> Result<DataMatrix<T>> {
    DataMatrix::new(op.apply_to_matrix(x.matrix())?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_matrix(d: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, 99);
        DMatrix::from_fn(d, n, |_, _| rng::normal(&mut r))
    }

    #[test]
    fn gaussian_entry_second_moment() {
        let (d, p) = (100, 20);
        let op = make_gaussian::<f64>(d, p, 11).unwrap();
        let m = op.apply_to_matrix(&DMatrix::identity(d, d)).unwrap();
        let n = (d * p) as f64;
        let sq: Vec<f64> = m.iter().map(|v| v * v).collect();
        let mean = sq.iter().sum::<f64>() / n;
        let var = sq.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        assert!((mean - 1.0 / p as f64).abs() <= 3.0 * stderr, "mean {mean}, stderr {stderr}");
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(make_gaussian::<f64>(10, 10, 0), Err(Error::BadDimensions(_))));
        assert!(make_uniform_rows::<f64>(10, 0, 0).is_err());
        assert!(make_fjlt::<f64>(4, 5, 0).is_err());
        assert!(make_sketch::<f64>(3, 3, 0).is_err());
    }

    #[test]
    fn same_seed_same_operator() {
        let x = random_matrix(37, 5, 1);
        for kind in [
            ProjectionKind::Gaussian,
            ProjectionKind::UniformRows,
            ProjectionKind::Fjlt,
            ProjectionKind::Sketch,
        ] {
            let desc = ProjectionDescriptor {
                kind,
                d: 37,
                p: 9,
                seed: 5,
                fjlt: None,
            };
            let a = make_operator::<f64>(&desc).unwrap().apply_to_matrix(&x).unwrap();
            let b = make_operator::<f64>(&desc).unwrap().apply_to_matrix(&x).unwrap();
            assert_eq!(a, b, "{kind:?}");
            let other = ProjectionDescriptor { seed: 6, ..desc };
            let c = make_operator::<f64>(&other).unwrap().apply_to_matrix(&x).unwrap();
            assert_ne!(a, c, "{kind:?}");
        }
    }

    #[test]
    fn streamed_gaussian_matches_cached() {
        let (d, p) = (64, 8);
        let cached = make_gaussian::<f64>(d, p, 3).unwrap();
        let streamed = ProjectionOperator {
            state: State::Gaussian { cached: None },
            ..cached.clone()
        };
        let x = random_matrix(d, 4, 2);
        assert_eq!(
            cached.apply_to_matrix(&x).unwrap(),
            streamed.apply_to_matrix(&x).unwrap()
        );
    }

    #[test]
    fn uniform_rows_pick_scaled_coordinates() {
        let (d, p) = (30, 7);
        let op = make_uniform_rows::<f64>(d, p, 4).unwrap();
        let x: Vec<f64> = (0..d).map(|i| i as f64 + 0.5).collect();
        let y = op.apply_vec(&x).unwrap();
        let s = (d as f64 / p as f64).sqrt();
        for (yi, &j) in y.iter().zip(op.sampled_rows().unwrap()) {
            assert_eq!(*yi, s * x[j]);
        }
        let ones = op.apply_vec(&vec![1.0; d]).unwrap();
        let sq: f64 = ones.iter().map(|v| v * v).sum();
        assert!((sq - d as f64).abs() < 1e-12);

        // identity-like column e_j
        let j = op.sampled_rows().unwrap()[0];
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        let y = op.apply_vec(&e).unwrap();
        for (yi, &row) in y.iter().zip(op.sampled_rows().unwrap()) {
            assert_eq!(*yi, if row == j { s } else { 0.0 });
        }
    }

    #[test]
    fn fjlt_rotation_is_norm_preserving() {
        let op = make_fjlt::<f64>(20, 5, 8).unwrap();
        let x: Vec<f64> = (0..20).map(|i| (i as f64).cos()).collect();
        let hdx = op.fjlt_rotate(&x).unwrap();
        assert_eq!(hdx.len(), 32);
        let a: f64 = x.iter().map(|v| v * v).sum();
        let b: f64 = hdx.iter().map(|v| v * v).sum();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn sketch_direct_evaluation() {
        let op = ProjectionOperator::sketch_from_parts(
            2,
            vec![0, 0, 1, 1],
            vec![1.0, -1.0, 1.0, 1.0],
        )
        .unwrap();
        assert_eq!(op.apply_vec(&[1.0, 2.0, 3.0, 4.0]).unwrap(), vec![-1.0, 7.0]);
        assert_eq!(
            op.apply_sparse(&[(1, 2.0), (3, 4.0)]).unwrap(),
            vec![-2.0, 4.0]
        );
    }

    #[test]
    fn sketch_sparse_input_touches_its_buckets() {
        let op = make_sketch::<f64>(200, 50, 17).unwrap();
        let buckets = op.sketch_buckets().unwrap();
        // three coordinates hashing to distinct buckets
        let mut picked = Vec::new();
        for j in 0..200 {
            if picked.iter().all(|&(i, _): &(usize, f64)| buckets[i] != buckets[j]) {
                picked.push((j, 1.0 + j as f64));
            }
            if picked.len() == 3 {
                break;
            }
        }
        let y = op.apply_sparse(&picked).unwrap();
        assert_eq!(y.iter().filter(|v| **v != 0.0).count(), 3);
        assert_eq!(y, op.apply_vec(&{
            let mut v = vec![0.0; 200];
            for &(j, x) in &picked {
                v[j] = x;
            }
            v
        }).unwrap());
    }

    #[test]
    fn apply_is_columnwise_and_linear() {
        let d = 40;
        let x = random_matrix(d, 3, 7);
        let y = random_matrix(d, 3, 8);
        for desc in [
            ProjectionDescriptor { kind: ProjectionKind::Gaussian, d, p: 10, seed: 1, fjlt: None },
            ProjectionDescriptor { kind: ProjectionKind::Fjlt, d, p: 10, seed: 1, fjlt: None },
            ProjectionDescriptor { kind: ProjectionKind::Sketch, d, p: 10, seed: 1, fjlt: None },
            ProjectionDescriptor { kind: ProjectionKind::UniformRows, d, p: 10, seed: 1, fjlt: None },
        ] {
            let op = make_operator::<f64>(&desc).unwrap();
            let (a, b) = (1.7, -0.3);
            let lhs = op.apply_to_matrix(&(&x * a + &y * b)).unwrap();
            let rhs = op.apply_to_matrix(&x).unwrap() * a + op.apply_to_matrix(&y).unwrap() * b;
            assert!((&lhs - &rhs).amax() <= 1e-10 * rhs.amax().max(1.0));
            let full = op.apply_to_matrix(&x).unwrap();
            for c in 0..3 {
                let col: Vec<f64> = x.column(c).iter().copied().collect();
                let v = op.apply_vec(&col).unwrap();
                for i in 0..10 {
                    assert!((full[(i, c)] - v[i]).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn zero_in_zero_out_and_dimension_check() {
        let op = make_gaussian::<f64>(12, 3, 0).unwrap();
        let z = DataMatrix::new(DMatrix::zeros(12, 4)).unwrap();
        assert_eq!(apply(&op, &z).unwrap().matrix(), &DMatrix::<f64>::zeros(3, 4));
        let wrong = DataMatrix::new(DMatrix::<f64>::zeros(11, 4)).unwrap();
        assert!(matches!(apply(&op, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn descriptor_round_trips_through_json() {
        let op = make_fjlt_with::<f64>(50, 10, 9, FjltParams { sparsity_c: 0.5, n_points: Some(100) }).unwrap();
        let json = serde_json::to_string(&op.descriptor()).unwrap();
        let desc: ProjectionDescriptor = serde_json::from_str(&json).unwrap();
        let again = make_operator::<f64>(&desc).unwrap();
        let x = random_matrix(50, 2, 1);
        assert_eq!(op.apply_to_matrix(&x).unwrap(), again.apply_to_matrix(&x).unwrap());
        let g: ProjectionDescriptor =
            serde_json::from_str(r#"{"kind":"gaussian","d":5,"p":2,"seed":1}"#).unwrap();
        assert_eq!(g.kind, ProjectionKind::Gaussian);
    }

    #[test]
    fn single_precision_operators() {
        let op = make_gaussian::<f32>(16, 4, 1).unwrap();
        let y = op.apply_vec(&[1.0f32; 16]).unwrap();
        assert_eq!(y.len(), 4);
    }
}
