//! Data model: column-major data matrices, labels, sparse self-representations.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::error::{Error, Result};
use crate::Real;

/// Columns whose Euclidean norm falls below this are rejected by [`normalize_columns`].
pub const ZERO_COLUMN_TOL: f64 = 1e-12;

/// Dense `d × N` matrix, one data point per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix<T: Real> {
    values: DMatrix<T>,
}

impl<T: Real> DataMatrix<T> {
    pub fn new(values: DMatrix<T>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::BadDimensions(format!(
                "data matrix must be at least 1x1, got {}x{}",
                values.nrows(),
                values.ncols()
            )));
        }
        for (col, column) in values.column_iter().enumerate() {
            if let Some(row) = column.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self { values })
    }

    pub fn from_columns(columns: &[DVector<T>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::BadDimensions("no columns".into()));
        }
        let d = columns[0].len();
        if let Some(bad) = columns.iter().find(|c| c.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Self::new(DMatrix::from_columns(columns))
    }

    /// Ambient dimension `d`.
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn column(&self, i: usize) -> DVectorView<'_, T> {
        self.values.column(i)
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn into_matrix(self) -> DMatrix<T> {
        self.values
    }

    pub fn column_norms(&self) -> Vec<T> {
        self.values.column_iter().map(|c| c.norm()).collect()
    }

    /// Keeps the columns at `indices`, in that order.
    pub fn select_columns(&self, indices: &[usize]) -> Result<Self> {
        Self::new(self.values.select_columns(indices))
    }

    pub fn cast<U: Real>(&self) -> DataMatrix<U> {
        DataMatrix {
            values: self.values.map(|v| U::of(v.as_f64())),
        }
    }
}

impl<T: Real> AsRef<DataMatrix<T>> for DataMatrix<T> {
    fn as_ref(&self) -> &DataMatrix<T> {
        self
    }
}

/// A data matrix whose columns all have unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDataMatrix<T: Real> {
    data: DataMatrix<T>,
    original_norms: Vec<T>,
}

impl<T: Real> NormalizedDataMatrix<T> {
    pub fn original_norms(&self) -> &[T] {
        &self.original_norms
    }

    pub fn data(&self) -> &DataMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DataMatrix<T> {
        self.data
    }
}

impl<T: Real> Deref for NormalizedDataMatrix<T> {
    type Target = DataMatrix<T>;

    fn deref(&self) -> &DataMatrix<T> {
        &self.data
    }
}

impl<T: Real> AsRef<DataMatrix<T>> for NormalizedDataMatrix<T> {
    fn as_ref(&self) -> &DataMatrix<T> {
        &self.data
    }
}

/// Divides every column by its Euclidean norm.
pub fn normalize_columns<T: Real>(x: &DataMatrix<T>) -> Result<NormalizedDataMatrix<T>> {
    let tol = T::of(ZERO_COLUMN_TOL);
    let mut values = x.values.clone();
    let mut norms = Vec::with_capacity(x.len());
    for (i, mut col) in values.column_iter_mut().enumerate() {
        let norm = col.norm();
        if norm < tol {
            return Err(Error::ZeroColumn(i));
        }
        col /= norm;
        norms.push(norm);
    }
    Ok(NormalizedDataMatrix {
        data: DataMatrix { values },
        original_norms: norms,
    })
}

/// Cluster assignments for `N` points into `k` clusters, every cluster non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    assignments: Vec<usize>,
    k: usize,
}

impl Labels {
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidLabels("k must be at least 1".into()));
        }
        let mut seen = vec![false; k];
        for (i, &a) in assignments.iter().enumerate() {
            if a >= k {
                return Err(Error::InvalidLabels(format!(
                    "point {i} has label {a} outside [0, {k})"
                )));
            }
            seen[a] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidLabels(format!("cluster {missing} is empty")));
        }
        Ok(Self { assignments, k })
    }

    /// Renumbers arbitrary labels to `0..k` in order of first appearance.
    pub fn compact(raw: &[usize]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let assignments: Vec<usize> = raw
            .iter()
            .map(|&r| {
                let next = map.len();
                *map.entry(r).or_insert(next)
            })
            .collect();
        let k = map.len();
        Self::new(assignments, k)
    }

    /// Labels for consecutive blocks of the given sizes.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let assignments = counts
            .iter()
            .enumerate()
            .flat_map(|(l, &n)| std::iter::repeat_n(l, n))
            .collect();
        Self::new(assignments, counts.len())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn get(&self, i: usize) -> usize {
        self.assignments[i]
    }

    /// Indices of the points in cluster `l`.
    pub fn members(&self, l: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == l).then_some(i))
            .collect()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &a in &self.assignments {
            c[a] += 1;
        }
        c
    }
}

/// Sparse `N × N` coefficient matrix with an identically zero diagonal,
/// stored by column as `(row, value)` pairs sorted by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfRepresentation<T: Real> {
    n: usize,
    columns: Vec<Vec<(usize, T)>>,
}

impl<T: Real> SelfRepresentation<T> {
    /// Builds from per-column entries. Exact zeros are dropped; any nonzero
    /// diagonal entry is rejected.
    pub fn from_columns(n: usize, columns: Vec<Vec<(usize, T)>>) -> Result<Self> {
        if columns.len() != n {
            return Err(Error::LengthMismatch(columns.len(), n));
        }
        let mut out = Vec::with_capacity(n);
        for (j, mut col) in columns.into_iter().enumerate() {
            col.retain(|&(_, v)| v != T::zero());
            col.sort_by_key(|&(i, _)| i);
            for w in col.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(Error::BadParameter(format!(
                        "duplicate entry ({}, {j})",
                        w[0].0
                    )));
                }
            }
            for &(i, v) in &col {
                if i >= n {
                    return Err(Error::BadDimensions(format!("row {i} out of range for N={n}")));
                }
                if i == j {
                    return Err(Error::DiagonalEntry(i));
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
            out.push(col);
        }
        Ok(Self { n, columns: out })
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut columns = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            if j >= n {
                return Err(Error::BadDimensions(format!("column {j} out of range for N={n}")));
            }
            columns[j].push((i, v));
        }
        Self::from_columns(n, columns)
    }

    pub fn from_dense(c: &DMatrix<T>) -> Result<Self> {
        if c.nrows() != c.ncols() {
            return Err(Error::BadDimensions(format!(
                "self-representation must be square, got {}x{}",
                c.nrows(),
                c.ncols()
            )));
        }
        let columns = c
            .column_iter()
            .map(|col| {
                col.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != T::zero())
                    .map(|(i, v)| (i, *v))
                    .collect()
            })
            .collect();
        Self::from_columns(c.ncols(), columns)
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            columns: vec![Vec::new(); n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn column(&self, j: usize) -> &[(usize, T)] {
        &self.columns[j]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.columns[j]
            .binary_search_by_key(&i, |&(r, _)| r)
            .map(|pos| self.columns[j][pos].1)
            .unwrap_or_else(|_| T::zero())
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// `(row, col, value)` for every stored entry, column-major.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(j, col)| col.iter().map(move |&(i, v)| (i, j, v)))
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, v) in self.triplets() {
            m[(i, j)] = v;
        }
        m
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let columns = self
            .columns
            .iter()
            .map(|col| {
                col.iter()
                    .map(|&(i, v)| (i, v * alpha))
                    .filter(|&(_, v)| v != T::zero())
                    .collect()
            })
            .collect();
        Self { n: self.n, columns }
    }

    /// Zeroes entries with `|c_ij| < rel · max_i |c_ij|` within each column.
    pub fn truncate_relative(&mut self, rel: f64) {
        let rel = T::of(rel);
        for col in &mut self.columns {
            let max = col.iter().fold(T::zero(), |m, &(_, v)| m.max(v.abs()));
            col.retain(|&(_, v)| v.abs() >= rel * max && v != T::zero());
        }
    }
}

/// Orthonormal bases of a union of subspaces, one `d × r_ℓ` matrix per subspace.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceEnsemble<T: Real> {
    bases: Vec<DMatrix<T>>,
}

impl<T: Real> SubspaceEnsemble<T> {
    pub fn new(bases: Vec<DMatrix<T>>) -> Result<Self> {
        if bases.is_empty() {
            return Err(Error::BadDimensions("ensemble needs at least one subspace".into()));
        }
        let d = bases[0].nrows();
        for b in &bases {
            if b.nrows() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: b.nrows(),
                });
            }
            check_orthonormal(b, T::ORTHO_TOL)?;
        }
        Ok(Self { bases })
    }

    pub fn k(&self) -> usize {
        self.bases.len()
    }

    pub fn dim(&self) -> usize {
        self.bases[0].nrows()
    }

    pub fn basis(&self, l: usize) -> &DMatrix<T> {
        &self.bases[l]
    }

    pub fn bases(&self) -> &[DMatrix<T>] {
        &self.bases
    }

    pub fn dims(&self) -> Vec<usize> {
        self.bases.iter().map(|b| b.ncols()).collect()
    }

    pub fn max_dim(&self) -> usize {
        self.bases.iter().map(|b| b.ncols()).max().unwrap_or(0)
    }
}

/// Fails with [`Error::NotOrthonormal`] when `max |UᵀU − I| > tol`.
pub fn check_orthonormal<T: Real>(u: &DMatrix<T>, tol: f64) -> Result<()> {
    let dev = orthonormality_defect(u);
    if dev > tol || u.ncols() > u.nrows() {
        return Err(Error::NotOrthonormal(dev));
    }
    Ok(())
}

pub(crate) fn orthonormality_defect<T: Real>(u: &DMatrix<T>) -> f64 {
    let g = u.transpose() * u;
    let mut dev = 0.0f64;
    for i in 0..g.nrows() {
        for j in 0..g.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            dev = dev.max((g[(i, j)].as_f64() - target).abs());
        }
    }
    dev
}

/// Orthonormal basis for the column span of `a` (thin QR; columns assumed independent).
pub fn orthonormalize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    let qr = a.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    // make diag(R) positive so the basis is a deterministic function of `a`
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalizes_pythagorean_column() {
        let x = DataMatrix::<f64>::new(DMatrix::from_column_slice(3, 1, &[3.0, 4.0, 0.0])).unwrap();
        let n = normalize_columns(&x).unwrap();
        assert!((n.column(0)[0] - 0.6).abs() < 1e-15);
        assert!((n.column(0)[1] - 0.8).abs() < 1e-15);
        assert_eq!(n.column(0)[2], 0.0);
        assert_eq!(n.original_norms(), &[5.0]);
    }

    #[test]
    fn unit_column_is_unchanged() {
        let x = DataMatrix::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let n = normalize_columns(&x).unwrap();
        assert_eq!(n.matrix(), x.matrix());
        assert_eq!(n.original_norms(), &[1.0]);
    }

    #[test]
    fn zero_column_is_rejected() {
        let x = DataMatrix::new(DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert!(matches!(normalize_columns(&x), Err(Error::ZeroColumn(1))));
    }

    #[test]
    fn rejects_non_finite_and_empty() {
        assert!(DataMatrix::new(DMatrix::<f64>::zeros(0, 3)).is_err());
        let m = DMatrix::from_column_slice(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(
            DataMatrix::new(m),
            Err(Error::NonFinite { row: 0, col: 1 })
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let x = DataMatrix::new(DMatrix::from_column_slice(2, 1, &[3.0f32, 4.0])).unwrap();
        let n = normalize_columns(&x).unwrap();
        assert!((n.column(0).norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn labels_require_every_cluster() {
        assert!(Labels::new(vec![0, 2, 2], 3).is_err());
        assert!(Labels::new(vec![0, 3], 3).is_err());
        let l = Labels::new(vec![1, 0, 1], 2).unwrap();
        assert_eq!(l.members(1), vec![0, 2]);
        assert_eq!(Labels::compact(&[5, 5, 9, 2]).unwrap().assignments(), &[0, 0, 1, 2]);
        assert_eq!(Labels::from_counts(&[2, 1]).unwrap().assignments(), &[0, 0, 1]);
    }

    #[test]
    fn self_representation_rejects_diagonal() {
        let err = SelfRepresentation::from_triplets(3, &[(0, 1, 1.0), (2, 2, 0.5)]);
        assert!(matches!(err, Err(Error::DiagonalEntry(2))));
        // explicit zero on the diagonal is fine: it is simply not stored
        let ok = SelfRepresentation::from_triplets(3, &[(1, 1, 0.0), (0, 1, -2.0)]).unwrap();
        assert_eq!(ok.nnz(), 1);
        assert_eq!(ok.get(0, 1), -2.0);
        assert_eq!(ok.get(1, 0), 0.0);
    }

    #[test]
    fn truncation_is_relative_per_column() {
        let mut c =
            SelfRepresentation::from_triplets(3, &[(1, 0, 1.0), (2, 0, 1e-9), (0, 1, 1e-12)])
                .unwrap();
        c.truncate_relative(1e-8);
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.get(2, 0), 0.0);
        assert_eq!(c.get(0, 1), 1e-12);
    }

    fn matrix_strategy() -> impl Strategy<Value = DMatrix<f64>> {
        (1usize..6, 1usize..6).prop_flat_map(|(d, n)| {
            proptest::collection::vec(-10.0f64..10.0, d * n)
                .prop_map(move |v| DMatrix::from_vec(d, n, v))
        })
    }

    proptest! {
        #[test]
        fn normalization_is_idempotent_and_unit(m in matrix_strategy()) {
            prop_assume!(m.column_iter().all(|c| c.norm() > 1e-6));
            let x = DataMatrix::new(m).unwrap();
            let once = normalize_columns(&x).unwrap();
            let twice = normalize_columns(once.data()).unwrap();
            for c in once.matrix().column_iter() {
                prop_assert!((c.norm() - 1.0).abs() <= 1e-9);
            }
            let diff = (once.matrix() - twice.matrix()).amax();
            prop_assert!(diff < 1e-12);
        }
    }
}
