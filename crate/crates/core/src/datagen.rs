//! Synthetic instances for the deterministic, semi-random and fully random
//! union-of-subspaces models, with optional bounded or Gaussian noise.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_orthonormal, orthonormalize, DataMatrix, Labels, SubspaceEnsemble};
use crate::error::{Error, Result};
use crate::{rng, Real};

/// A basis or a point set written as a list of columns.
pub type Columns = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataModel {
    /// Given bases and given points, one `d × N_ℓ` column list per subspace.
    Deterministic { bases: Vec<Columns>, points: Vec<Columns> },
    /// Given bases, points uniform on each unit sphere.
    SemiRandom { bases: Vec<Columns> },
    /// Uniformly random bases and points.
    FullyRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialStrategy {
    RandomDirection,
    TowardOtherSubspace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseModel {
    #[default]
    None,
    Adversarial { eta: f64, strategy: AdversarialStrategy },
    Gaussian { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub d: usize,
    pub dims: Vec<usize>,
    pub counts: Vec<usize>,
    pub model: DataModel,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
    /// Append a constant coordinate to every clean point and renormalize.
    #[serde(default)]
    pub homogeneous: bool,
}

impl ModelSpec {
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn n(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() != self.counts.len() {
            return Err(Error::LengthMismatch(self.dims.len(), self.counts.len()));
        }
        if self.d == 0 {
            return Err(Error::BadDimensions("d must be >= 1".into()));
        }
        for (&r, &n) in self.dims.iter().zip(&self.counts) {
            if r == 0 || r > self.d {
                return Err(Error::BadDimensions(format!("subspace dimension {r} with d = {}", self.d)));
            }
            if n == 0 {
                return Err(Error::BadParameter("every subspace needs at least one point".into()));
            }
        }
        match self.noise {
            NoiseModel::Adversarial { eta, .. } if !(eta >= 0.0) || !eta.is_finite() => {
                Err(Error::BadParameter(format!("eta must be >= 0, got {eta}")))
            }
            NoiseModel::Gaussian { sigma } if !(sigma >= 0.0) || !sigma.is_finite() => {
                Err(Error::BadParameter(format!("sigma must be >= 0, got {sigma}")))
            }
            _ => Ok(()),
        }
    }
}

/// Clean points `Y` (unit columns), observed `X = Y + Z`, noise `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance<T: Real> {
    pub clean: DataMatrix<T>,
    pub observed: DataMatrix<T>,
    pub noise: DataMatrix<T>,
    pub ensemble: SubspaceEnsemble<T>,
    pub truth: Labels,
}

fn seed_for(seed: u64, path: &[u64]) -> u64 {
    rng::derive_seed(seed, path)
}

/// Orthonormal basis of the column space of a `d × r` standard Gaussian matrix.
pub fn random_subspace<T: Real>(d: usize, r: usize, seed: u64) -> Result<DMatrix<T>> {
    if r == 0 || r > d {
        return Err(Error::BadDimensions(format!("cannot draw a {r}-dimensional subspace of R^{d}")));
    }
    let mut g = rng::stream(seed, 0);
    let m = DMatrix::<f64>::from_fn(d, r, |_, _| rng::normal(&mut g));
    Ok(orthonormalize(&m).map(T::of))
}

/// Columns `U g/‖g‖` with `g` standard Gaussian in `ℝʳ`.
pub fn semirandom_points<T: Real>(u: &DMatrix<T>, n: usize, seed: u64) -> DMatrix<T> {
    let (d, r) = u.shape();
    let uf = u.map(|v| v.as_f64());
    let mut out = DMatrix::zeros(d, n);
    let mut g = rng::stream(seed, 0);
    for j in 0..n {
        let mut c = DVector::from_vec(rng::normals::<f64, _>(&mut g, r));
        while c.norm() == 0.0 {
            c = DVector::from_vec(rng::normals::<f64, _>(&mut g, r));
        }
        let x = &uf * c.normalize();
        let x = x.normalize();
        out.set_column(j, &x.map(T::of));
    }
    out
}

/// I.i.d. `N(0, σ²/d)` entries.
pub fn gaussian_noise<T: Real>(d: usize, n: usize, sigma: f64, seed: u64) -> Result<DataMatrix<T>> {
    if !(sigma >= 0.0) {
        return Err(Error::BadParameter(format!("sigma must be >= 0, got {sigma}")));
    }
    let sd = sigma / (d as f64).sqrt();
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(seed, j as u64);
            (0..d).map(|_| sd * rng::normal::<f64, _>(&mut g)).collect()
        })
        .collect();
    DataMatrix::new(DMatrix::from_fn(d, n, |i, j| T::of(cols[j][i])))
}

fn random_unit(d: usize, g: &mut rng::SscRng) -> DVector<f64> {
    loop {
        let v = DVector::from_vec(rng::normals::<f64, _>(g, d));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// Noise columns of norm exactly `η` (up to rounding).
///
/// `TowardOtherSubspace` pushes `y` toward the subspace `m` with the largest
/// affinity to its own: `z ∝ q̂ − y` with `q̂ = P_m y/‖P_m y‖`, i.e. from `y`
/// toward the closest unit vector of that subspace. Falls back to a random
/// direction when that vector vanishes or when there is only one subspace.
pub fn adversarial_noise<T: Real>(
    clean: &DataMatrix<T>,
    ensemble: &SubspaceEnsemble<T>,
    labels: &Labels,
    eta: f64,
    strategy: AdversarialStrategy,
    seed: u64,
) -> Result<DataMatrix<T>> {
    if !(eta >= 0.0) {
        return Err(Error::BadParameter(format!("eta must be >= 0, got {eta}")));
    }
    if labels.len() != clean.len() {
        return Err(Error::LengthMismatch(labels.len(), clean.len()));
    }
    let d = clean.dim();
    let k = ensemble.k();
    let target: Vec<Option<usize>> = if strategy == AdversarialStrategy::TowardOtherSubspace && k > 1 {
        let aff = crate::geometry::affinity_matrix(ensemble)?;
        (0..k)
            .map(|l| {
                (0..k)
                    .filter(|&m| m != l)
                    .max_by(|&a, &b| aff[l][a].total_cmp(&aff[l][b]).then(b.cmp(&a)))
            })
            .collect()
    } else {
        vec![None; k]
    };
    let bases: Vec<DMatrix<f64>> = ensemble.bases().iter().map(|b| b.map(|v| v.as_f64())).collect();
    let cols: Vec<DVector<f64>> = (0..clean.len())
        .into_par_iter()
        .map(|j| {
            let mut g = rng::stream(seed, j as u64);
            let y = clean.column(j).map(|v| v.as_f64());
            let dir = target[labels.get(j)].and_then(|m| {
                let u = &bases[m];
                let q = u * u.tr_mul(&y);
                let w = &q - &y * q.norm();
                let n = w.norm();
                (n > 1e-12).then(|| w / n)
            });
            dir.unwrap_or_else(|| random_unit(d, &mut g)) * eta
        })
        .collect();
    DataMatrix::new(DMatrix::from_fn(d, clean.len(), |i, j| T::of(cols[j][i])))
}

fn columns_to_matrix<T: Real>(d: usize, cols: &Columns) -> Result<DMatrix<T>> {
    for c in cols {
        if c.len() != d {
            return Err(Error::DimensionMismatch { expected: d, found: c.len() });
        }
    }
    Ok(DMatrix::from_fn(d, cols.len(), |i, j| T::of(cols[j][i])))
}

/// Builds an instance; deterministic given `spec`.
pub fn generate<T: Real>(spec: &ModelSpec) -> Result<Instance<T>> {
    spec.validate()?;
    let (d, k) = (spec.d, spec.k());
    let bases: Vec<DMatrix<T>> = match &spec.model {
        DataModel::Deterministic { bases, .. } | DataModel::SemiRandom { bases } => {
            if bases.len() != k {
                return Err(Error::LengthMismatch(bases.len(), k));
            }
            bases
                .iter()
                .zip(&spec.dims)
                .map(|(b, &r)| {
                    let m = columns_to_matrix::<T>(d, b)?;
                    if m.ncols() != r {
                        return Err(Error::DimensionMismatch { expected: r, found: m.ncols() });
                    }
                    check_orthonormal(&m, T::ORTHO_TOL.max(1e-8))?;
                    Ok(m)
                })
                .collect::<Result<_>>()?
        }
        DataModel::FullyRandom => spec
            .dims
            .iter()
            .enumerate()
            .map(|(l, &r)| random_subspace(d, r, seed_for(spec.seed, &[1, l as u64])))
            .collect::<Result<_>>()?,
    };
    let blocks: Vec<DMatrix<T>> = match &spec.model {
        DataModel::Deterministic { points, .. } => {
            if points.len() != k {
                return Err(Error::LengthMismatch(points.len(), k));
            }
            points
                .iter()
                .zip(&spec.counts)
                .map(|(p, &n)| {
                    let m = columns_to_matrix::<T>(d, p)?;
                    if m.ncols() != n {
                        return Err(Error::LengthMismatch(m.ncols(), n));
                    }
                    Ok(m)
                })
                .collect::<Result<_>>()?
        }
        _ => bases
            .par_iter()
            .zip(spec.counts.par_iter())
            .enumerate()
            .map(|(l, (u, &n))| semirandom_points(u, n, seed_for(spec.seed, &[2, l as u64])))
            .collect(),
    };
    let n = spec.n();
    let mut y = DMatrix::<T>::zeros(d, n);
    let mut offset = 0;
    for b in &blocks {
        y.columns_mut(offset, b.ncols()).copy_from(b);
        offset += b.ncols();
    }
    let clean = DataMatrix::new(y)?;
    // given points pass through untouched, so they must already be unit
    for (j, nrm) in clean.column_norms().iter().enumerate() {
        if (nrm.as_f64() - 1.0).abs() > T::ORTHO_TOL.max(1e-8) {
            return Err(Error::BadParameter(format!("point {j} has norm {nrm}, expected 1")));
        }
    }
    let truth = Labels::from_counts(&spec.counts)?;
    let (clean, ensemble) = if spec.homogeneous {
        homogeneous_embedding(&clean, &bases)?
    } else {
        (clean, SubspaceEnsemble::new(bases)?)
    };
    let dn = clean.dim();
    let noise_seed = seed_for(spec.seed, &[3]);
    let noise = match spec.noise {
        NoiseModel::None => DataMatrix::new(DMatrix::zeros(dn, n))?,
        NoiseModel::Gaussian { sigma } => gaussian_noise(dn, n, sigma, noise_seed)?,
        NoiseModel::Adversarial { eta, strategy } => {
            adversarial_noise(&clean, &ensemble, &truth, eta, strategy, noise_seed)?
        }
    };
    let observed = DataMatrix::new(clean.matrix() + noise.matrix())?;
    Ok(Instance {
        clean,
        observed,
        noise,
        ensemble,
        truth,
    })
}

/// `y ↦ [y; 1]/√2` on unit columns, with every basis extended by the new axis.
fn homogeneous_embedding<T: Real>(
    clean: &DataMatrix<T>,
    bases: &[DMatrix<T>],
) -> Result<(DataMatrix<T>, SubspaceEnsemble<T>)> {
    let (d, n) = (clean.dim(), clean.len());
    let s = T::of(std::f64::consts::FRAC_1_SQRT_2);
    let y = DMatrix::from_fn(d + 1, n, |i, j| if i < d { clean.matrix()[(i, j)] * s } else { s });
    let ext = bases
        .iter()
        .map(|u| {
            let r = u.ncols();
            DMatrix::from_fn(d + 1, r + 1, |i, j| match (i < d, j < r) {
                (true, true) => u[(i, j)],
                (false, false) => T::one(),
                _ => T::zero(),
            })
        })
        .collect();
    Ok((DataMatrix::new(y)?, SubspaceEnsemble::new(ext)?))
}
