//! Experiment runner: generate or load data, project, normalize, optionally
//! privatize, solve, cluster and evaluate over a `p × λ` grid.
//!
//! Outputs (all deterministic except `timings.csv`):
//!
//! * `results.csv`: one row per (grid point, replicate), ordered by grid index
//!   then replicate.
//! * `records.jsonl`: the same records with every checker's inequalities.
//! * `run.json`: resolved config, library version and RNG identifiers.
//! * `timings.csv`: wall time per record.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::{build_similarity, evaluate, spectral_cluster_detailed, ZERO_TOL};
use crate::data::{normalize_columns, orthonormalize, DataMatrix, Labels, SubspaceEnsemble};
use crate::datagen::{generate, ModelSpec, NoiseModel};
use crate::embeddings::{apply, make_operator, subspace_distortion, FjltParams, ProjectionDescriptor, ProjectionKind};
use crate::error::{Error, Result};
use crate::geometry::{
    affinity_matrix, check_cited_noisy_ssc, check_deterministic_noise, check_fully_random, check_noiseless,
    check_semirandom, check_stochastic_noise, cluster_inradii, incoherence_from_duals, ConditionVerdict,
    GeometryReport, InequalityCheck, NoiseConstants,
};
use crate::privacy::{check_utility, privatize, utility_margin, PrivacyParams};
use crate::solver::{lambda_max, solve_batch_with, BatchSolve, LassoSettings, LassoSystem, WarmStart};
use crate::{io, rng};

// seed-derivation tags
const TAG_DATA: u64 = 1;
const TAG_PROJECT: u64 = 2;
const TAG_PRIVACY: u64 = 3;
const TAG_CLUSTER: u64 = 4;
const TAG_RECORD: u64 = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Generate(ModelSpec),
    File(FileSource),
}

/// A `d × N` CSV matrix (columns are points) and a label file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileSource {
    pub matrix: PathBuf,
    pub labels: PathBuf,
    #[serde(default)]
    pub header: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(usize),
    Many(Vec<usize>),
}

impl OneOrMany {
    pub fn values(&self) -> Vec<usize> {
        match self {
            OneOrMany::One(v) => vec![*v],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectorConfig {
    pub kind: ProjectionKind,
    pub p: OneOrMany,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fjlt: Option<FjltParams>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    #[default]
    Absolute,
    /// `λ_i = α·λ_max(i)` with `α` taken from the grid.
    Relative,
}

impl LambdaMode {
    fn name(self) -> &'static str {
        match self {
            LambdaMode::Absolute => "absolute",
            LambdaMode::Relative => "relative",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_tol")]
    pub tol_kkt: f64,
    #[serde(default = "default_iters")]
    pub max_iters: usize,
    #[serde(default = "default_rho")]
    pub admm_rho: f64,
}

fn default_tol() -> f64 {
    LassoSettings::new(1.0).tol_kkt
}
fn default_iters() -> usize {
    LassoSettings::new(1.0).max_iters
}
fn default_rho() -> f64 {
    LassoSettings::new(1.0).admm_rho
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol_kkt: default_tol(),
            max_iters: default_iters(),
            admm_rho: default_rho(),
        }
    }
}

impl SolverConfig {
    fn settings(&self, lambda: f64) -> LassoSettings {
        LassoSettings {
            lambda,
            tol_kkt: self.tol_kkt,
            max_iters: self.max_iters,
            admm_rho: self.admm_rho,
        }
    }
}

/// Hidden constants of the sufficient conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckerConstants {
    #[serde(default)]
    pub noise: NoiseConstants,
    #[serde(default = "one")]
    pub semirandom_c: f64,
    #[serde(default = "one")]
    pub fully_random_c: f64,
    #[serde(default = "one")]
    pub utility_c: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CheckerConstants {
    fn default() -> Self {
        Self {
            noise: NoiseConstants::default(),
            semirandom_c: 1.0,
            fully_random_c: 1.0,
            utility_c: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// `None` runs on the uncompressed data.
    #[serde(default)]
    pub projector: Option<ProjectorConfig>,
    pub lambda_grid: Vec<f64>,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    #[serde(default)]
    pub privacy: Option<PrivacyParams>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_outputs")]
    pub outputs: PathBuf,
    #[serde(default)]
    pub solver: SolverConfig,
    /// Compute incoherence, inradius and checker verdicts (needs generated data).
    #[serde(default = "default_true")]
    pub geometry: bool,
    #[serde(default)]
    pub constants: CheckerConstants,
    #[serde(default = "default_zero_tol")]
    pub zero_tol: f64,
}

fn default_replicates() -> usize {
    1
}
fn default_outputs() -> PathBuf {
    PathBuf::from("out")
}
fn default_true() -> bool {
    true
}
fn default_zero_tol() -> f64 {
    ZERO_TOL
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)?;
        // relative data paths are resolved against the config file
        if let (DataSource::File(f), Some(dir)) = (&mut cfg.data, path.parent()) {
            for p in [&mut f.matrix, &mut f.labels] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() {
            return Err(Error::Config("lambda_grid must not be empty".into()));
        }
        if let Some(&bad) = self.lambda_grid.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Config(format!("lambda values must be positive, got {bad}")));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be >= 1".into()));
        }
        if let Some(proj) = &self.projector {
            let ps = proj.p.values();
            if ps.is_empty() || ps.contains(&0) {
                return Err(Error::Config("projector.p must be a non-empty list of positive sizes".into()));
            }
        }
        if let Some(pp) = &self.privacy {
            pp.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        if let DataSource::Generate(spec) = &self.data {
            spec.validate().map_err(|e| Error::Config(e.to_string()))?;
            if let Some(proj) = &self.projector {
                let d = spec.d + usize::from(spec.homogeneous);
                if let Some(&p) = proj.p.values().iter().find(|&&p| p >= d) {
                    return Err(Error::Config(format!("projected dimension {p} must be below d = {d}")));
                }
            }
        }
        self.solver
            .settings(self.lambda_grid[0])
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if !(self.zero_tol >= 0.0) {
            return Err(Error::Config("zero_tol must be >= 0".into()));
        }
        Ok(())
    }

    /// Projected sizes; `[None]` when there is no projector.
    pub fn p_grid(&self) -> Vec<Option<usize>> {
        match &self.projector {
            Some(p) => p.p.values().into_iter().map(Some).collect(),
            None => vec![None],
        }
    }

    pub fn grid_size(&self) -> usize {
        self.p_grid().len() * self.lambda_grid.len()
    }
}

/// `ρ`, `μ` per subspace and the derived margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometrySummary {
    pub margin: f64,
    pub rho: Vec<f64>,
    pub mu: Vec<f64>,
    pub max_affinity: f64,
}

impl From<&GeometryReport> for GeometrySummary {
    fn from(r: &GeometryReport) -> Self {
        Self {
            margin: r.margin,
            rho: r.rho.clone(),
            mu: r.mu.clone(),
            max_affinity: r.max_affinity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedVerdict {
    pub checker: String,
    pub verdict: ConditionVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub grid_index: usize,
    pub replicate: usize,
    pub seed: u64,
    pub projector: String,
    /// `None` for uncompressed runs.
    pub p: Option<usize>,
    pub lambda: f64,
    pub lambda_mode: LambdaMode,
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub private: bool,
    pub sigma_priv: Option<f64>,
    /// Largest distortion `max |σ − 1|` of the projection on any true subspace.
    pub eps_measured: Option<f64>,
    pub clustering_error: Option<f64>,
    #[serde(with = "crate::harness::opt_infinite")]
    pub rel_violation: Option<f64>,
    pub sdp: Option<bool>,
    pub sep: Option<bool>,
    pub trivial_columns: Option<usize>,
    pub solver_failures: usize,
    pub max_kkt: f64,
    pub isolated_vertices: usize,
    pub degenerate_graph: bool,
    pub geometry_pre: Option<GeometrySummary>,
    pub geometry_post: Option<GeometrySummary>,
    pub verdicts: Vec<NamedVerdict>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl ResultRecord {
    pub fn verdict(&self, checker: &str) -> Option<&ConditionVerdict> {
        self.verdicts.iter().find(|v| v.checker == checker).map(|v| &v.verdict)
    }
}

mod opt_infinite {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) if x.is_finite() => s.serialize_some(&Repr::Num(*x)),
            Some(x) if x.is_nan() => s.serialize_some(&Repr::Text("nan".into())),
            Some(x) if *x > 0.0 => s.serialize_some(&Repr::Text("inf".into())),
            Some(_) => s.serialize_some(&Repr::Text("-inf".into())),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => None,
            Some(Repr::Num(x)) => Some(x),
            Some(Repr::Text(t)) => Some(match t.as_str() {
                "inf" => f64::INFINITY,
                "-inf" => f64::NEG_INFINITY,
                _ => f64::NAN,
            }),
        })
    }
}

/// All records of a run plus the number of per-column solver failures.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub records: Vec<ResultRecord>,
    pub solver_failures: usize,
}

impl RunSummary {
    /// Process exit code: 0 iff no column solve failed.
    pub fn exit_code(&self) -> i32 {
        i32::from(self.solver_failures > 0)
    }
}

/// Data for one replicate, shared by every projection size.
struct Prepared {
    observed: DataMatrix<f64>,
    clean: Option<DataMatrix<f64>>,
    ensemble: Option<SubspaceEnsemble<f64>>,
    truth: Labels,
    noise: NoiseModel,
    eta: f64,
    /// `ρ` and affinities of the original data, and `μ` per λ.
    pre: Option<(Vec<f64>, Vec<Vec<f64>>)>,
    mu_pre: Vec<Option<Vec<f64>>>,
}

fn record_seed(master: u64, grid_index: usize, replicate: usize) -> u64 {
    rng::derive_seed(master, &[TAG_RECORD, grid_index as u64, replicate as u64])
}

/// Lambda indices from the largest λ down, for warm starts.
fn descending(lambdas: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]).then(a.cmp(&b)));
    order
}

fn sweep(
    system: &LassoSystem,
    cfg: &ExperimentConfig,
    mut visit: impl FnMut(usize, &BatchSolve) -> Result<()>,
) -> Result<()> {
    let lmax: Vec<f64> = match cfg.lambda_mode {
        LambdaMode::Absolute => Vec::new(),
        LambdaMode::Relative => (0..system.n()).map(|i| lambda_max(system, i)).collect(),
    };
    let mut warm: Option<Vec<WarmStart>> = None;
    for li in descending(&cfg.lambda_grid) {
        let alpha = cfg.lambda_grid[li];
        let batch = solve_batch_with(
            system,
            |i| match cfg.lambda_mode {
                LambdaMode::Absolute => cfg.solver.settings(alpha),
                // a column orthogonal to the rest has λ_max = 0; any λ gives 0
                LambdaMode::Relative => cfg.solver.settings((alpha * lmax[i]).max(f64::MIN_POSITIVE)),
            },
            warm.as_deref(),
        )?;
        visit(li, &batch)?;
        warm = Some(batch.warm);
    }
    Ok(())
}

fn duals(batch: &BatchSolve) -> Vec<DVector<f64>> {
    batch.solutions.iter().map(|s| s.dual.clone()).collect()
}

fn prepare(cfg: &ExperimentConfig, loaded: Option<&(DataMatrix<f64>, Labels)>, replicate: usize) -> Result<Prepared> {
    let (observed, clean, ensemble, truth, noise, eta) = match &cfg.data {
        DataSource::Generate(spec) => {
            let mut spec = spec.clone();
            spec.seed = rng::derive_seed(cfg.seed, &[TAG_DATA, spec.seed, replicate as u64]);
            let inst = generate::<f64>(&spec)?;
            let eta = inst.noise.column_norms().into_iter().fold(0.0, f64::max);
            (inst.observed, Some(inst.clean), Some(inst.ensemble), inst.truth, spec.noise, eta)
        }
        DataSource::File(_) => {
            let (x, labels) = loaded.expect("file data is loaded up front");
            (x.clone(), None, None, labels.clone(), NoiseModel::None, 0.0)
        }
    };
    let mut prepared = Prepared {
        observed,
        clean,
        ensemble,
        truth,
        noise,
        eta,
        pre: None,
        mu_pre: vec![None; cfg.lambda_grid.len()],
    };
    if cfg.geometry {
        if let (Some(clean), Some(ens)) = (&prepared.clean, &prepared.ensemble) {
            let rho = cluster_inradii(clean, &prepared.truth, &ens.dims())?;
            prepared.pre = Some((rho, affinity_matrix(ens)?));
            let xn = normalize_columns(&prepared.observed)?;
            let system = LassoSystem::new(&xn, cfg.solver.admm_rho)?;
            let mut mu_pre = vec![None; cfg.lambda_grid.len()];
            sweep(&system, cfg, |li, batch| {
                if batch.failures().is_empty() {
                    mu_pre[li] = Some(incoherence_from_duals(&xn, &prepared.truth, ens, &duals(batch))?.mu);
                }
                Ok(())
            })?;
            prepared.mu_pre = mu_pre;
        }
    }
    Ok(prepared)
}

/// Runs every (p, replicate) unit and returns records in (grid, replicate) order.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let loaded = match &cfg.data {
        DataSource::File(f) => {
            let x = io::load_csv::<f64>(&f.matrix, f.header)?;
            let labels = io::load_labels(&f.labels)?;
            if labels.len() != x.len() {
                return Err(Error::LengthMismatch(labels.len(), x.len()));
            }
            if let Some(proj) = &cfg.projector {
                if let Some(&p) = proj.p.values().iter().find(|&&p| p >= x.dim()) {
                    return Err(Error::Config(format!("projected dimension {p} must be below d = {}", x.dim())));
                }
            }
            Some((x, labels))
        }
        DataSource::Generate(_) => None,
    };
    let prepared: Vec<Prepared> = (0..cfg.replicates)
        .into_par_iter()
        .map(|rep| prepare(cfg, loaded.as_ref(), rep))
        .collect::<Result<_>>()?;
    let ps = cfg.p_grid();
    let units: Vec<(usize, usize)> = (0..ps.len())
        .flat_map(|pi| (0..cfg.replicates).map(move |rep| (pi, rep)))
        .collect();
    let mut records: Vec<ResultRecord> = units
        .par_iter()
        .map(|&(pi, rep)| run_unit(cfg, &prepared[rep], pi, ps[pi], rep))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    records.sort_by_key(|r| (r.grid_index, r.replicate));
    let solver_failures = records.iter().map(|r| r.solver_failures).sum();
    Ok(RunSummary {
        records,
        solver_failures,
    })
}

/// One projection of one replicate, swept over λ from the largest value down.
fn run_unit(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    pi: usize,
    p: Option<usize>,
    rep: usize,
) -> Result<Vec<ResultRecord>> {
    let start = Instant::now();
    let d = prep.observed.dim();
    let n = prep.observed.len();
    let k = prep.truth.k();
    let nl = cfg.lambda_grid.len();
    // project
    let (projected, op_desc) = match (&cfg.projector, p) {
        (Some(proj), Some(p)) => {
            let desc = ProjectionDescriptor {
                kind: proj.kind,
                d,
                p,
                seed: rng::derive_seed(cfg.seed, &[TAG_PROJECT, pi as u64, rep as u64]),
                fjlt: proj.fjlt.or(Some(FjltParams {
                    n_points: Some(n),
                    ..FjltParams::default()
                })),
            };
            let op = make_operator::<f64>(&desc)?;
            (apply(&op, &prep.observed)?, Some((desc, op)))
        }
        _ => (prep.observed.clone(), None),
    };
    let xn = normalize_columns(&projected)?;
    let (input, sigma_priv) = match &cfg.privacy {
        Some(pp) => {
            let seed = rng::derive_seed(cfg.seed, &[TAG_PRIVACY, pi as u64, rep as u64]);
            let rel = privatize(&xn, pp, d, seed)?;
            (rel.data, Some(rel.sigma))
        }
        None => (xn.data().clone(), None),
    };
    // geometry of the projected problem (λ-independent parts)
    let mut eps_measured = None;
    let mut post_static: Option<(Vec<f64>, Vec<Vec<f64>>, SubspaceEnsemble<f64>)> = None;
    if let Some(ens) = &prep.ensemble {
        if let Some((_, op)) = &op_desc {
            let mut e = 0.0f64;
            for b in ens.bases() {
                e = e.max(subspace_distortion(op, b)?.norm);
            }
            eps_measured = Some(e);
        } else {
            eps_measured = Some(0.0);
        }
        if let (true, Some(clean)) = (cfg.geometry, &prep.clean) {
            let (clean_p, ens_p) = match &op_desc {
                Some((_, op)) => {
                    let bases: Vec<DMatrix<f64>> = ens
                        .bases()
                        .iter()
                        .map(|b| op.apply_to_matrix(b).map(|m| orthonormalize(&m)))
                        .collect::<Result<_>>()?;
                    (normalize_columns(&apply(op, clean)?)?.into_data(), SubspaceEnsemble::new(bases)?)
                }
                None => (clean.clone(), ens.clone()),
            };
            // a projection can collapse a subspace; then ρ_post is undefined
            let rho = cluster_inradii(&clean_p, &prep.truth, &ens_p.dims()).ok();
            if let Some(rho) = rho {
                post_static = Some((rho, affinity_matrix(&ens_p)?, ens_p));
            }
        }
    }
    let system = LassoSystem::new(&input, cfg.solver.admm_rho)?;
    let mut out: Vec<Option<ResultRecord>> = vec![None; nl];
    sweep(&system, cfg, |li, batch| {
        let grid_index = pi * nl + li;
        let seed = record_seed(cfg.seed, grid_index, rep);
        let lambda = cfg.lambda_grid[li];
        let failures = batch.failures().len();
        let max_kkt = batch.solutions.iter().map(|s| s.kkt_residual).fold(0.0, f64::max);
        let mut rec = ResultRecord {
            grid_index,
            replicate: rep,
            seed,
            projector: op_desc.as_ref().map_or("none".into(), |(d, _)| d.kind.name().to_string()),
            p,
            lambda,
            lambda_mode: cfg.lambda_mode,
            d,
            n,
            k,
            private: cfg.privacy.is_some(),
            sigma_priv,
            eps_measured,
            clustering_error: None,
            rel_violation: None,
            sdp: None,
            sep: None,
            trivial_columns: None,
            solver_failures: failures,
            max_kkt,
            isolated_vertices: 0,
            degenerate_graph: false,
            geometry_pre: None,
            geometry_post: None,
            verdicts: Vec::new(),
            error: None,
            wall_seconds: 0.0,
        };
        if failures > 0 {
            let first = &batch.solutions[batch.failures()[0]];
            rec.error = Some(
                Error::NoConvergence {
                    iterations: first.iterations,
                    residual: first.kkt_residual,
                }
                .to_string(),
            );
        }
        let c = batch.representation::<f64>()?;
        let cluster_seed = rng::derive_seed(cfg.seed, &[TAG_CLUSTER, grid_index as u64, rep as u64]);
        let outcome = spectral_cluster_detailed(&build_similarity(&c), k, cluster_seed)?;
        let eval = evaluate(&c, &outcome.labels, &prep.truth, cfg.zero_tol)?;
        rec.clustering_error = Some(eval.clustering_error);
        rec.rel_violation = Some(eval.rel_violation);
        rec.sdp = Some(eval.sdp_holds);
        rec.sep = Some(eval.sep_holds);
        rec.trivial_columns = Some(eval.trivial_columns);
        rec.isolated_vertices = outcome.isolated;
        rec.degenerate_graph = outcome.degenerate;
        if cfg.geometry {
            let pre = match (&prep.pre, &prep.mu_pre[li]) {
                (Some((rho, aff)), Some(mu)) => Some(GeometryReport::new(mu.clone(), rho.clone(), aff.clone())?),
                _ => None,
            };
            let post = match &post_static {
                Some((rho, aff, ens_p)) if failures == 0 => {
                    match incoherence_from_duals(&input, &prep.truth, ens_p, &duals(batch)) {
                        Ok(inc) => Some(GeometryReport::new(inc.mu, rho.clone(), aff.clone())?),
                        Err(e) => {
                            rec.error.get_or_insert(e.to_string());
                            None
                        }
                    }
                }
                _ => None,
            };
            rec.verdicts = verdicts(cfg, prep, pre.as_ref(), post.as_ref(), lambda, eps_measured.unwrap_or(0.0), p)?;
            rec.geometry_pre = pre.as_ref().map(GeometrySummary::from);
            rec.geometry_post = post.as_ref().map(GeometrySummary::from);
        }
        out[li] = Some(rec);
        Ok(())
    })?;
    let elapsed = start.elapsed().as_secs_f64() / nl as f64;
    Ok(out
        .into_iter()
        .map(|r| {
            let mut r = r.expect("every λ visited");
            r.wall_seconds = elapsed;
            r
        })
        .collect())
}

fn verdicts(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    pre: Option<&GeometryReport>,
    post: Option<&GeometryReport>,
    lambda: f64,
    eps: f64,
    p: Option<usize>,
) -> Result<Vec<NamedVerdict>> {
    let mut out = Vec::new();
    let named = |name: &str, verdict: ConditionVerdict| NamedVerdict {
        checker: name.to_string(),
        verdict,
    };
    let Some(ens) = &prep.ensemble else { return Ok(out) };
    let d = prep.observed.dim();
    let n = prep.observed.len();
    let k = ens.k();
    let r = ens.max_dim();
    let kappa = prep
        .truth
        .counts()
        .iter()
        .zip(ens.dims())
        .map(|(&c, r)| c as f64 / r as f64)
        .fold(f64::INFINITY, f64::min);
    let c = &cfg.constants;
    if let Some(rep) = pre {
        out.push(named("noiseless", check_noiseless(rep, lambda, eps, c.noise.c_eps)));
        out.push(named(
            "deterministic_noise",
            check_deterministic_noise(rep, lambda, eps, prep.eta, c.noise.c_eps),
        ));
        if let NoiseModel::Gaussian { sigma } = prep.noise {
            out.push(named(
                "stochastic_noise",
                check_stochastic_noise(rep, lambda, eps, sigma, d, n, r, c.noise),
            ));
        }
        out.push(named("uncompressed_noisy", check_cited_noisy_ssc(rep, lambda, prep.eta)));
    }
    if kappa > 1.0 {
        out.push(named(
            "semirandom",
            check_semirandom(kappa, r, k, n, max_off_diagonal(&affinity_matrix(ens)?), c.semirandom_c)?,
        ));
        out.push(named("fully_random", check_fully_random(r, d, n, kappa, c.fully_random_c)?));
    }
    if let (Some(pp), Some(p)) = (&cfg.privacy, p.or(Some(d))) {
        let verdict = match post {
            Some(rep) => {
                let b = utility_margin(rep, r);
                if b > 0.0 {
                    check_utility(pp.eps_priv, pp.delta_priv, pp.mu0, d, p, n, b, c.utility_c)?
                } else {
                    ConditionVerdict::from_checks(vec![InequalityCheck::new("utility margin positive", 0.0, b, true)])
                }
            }
            None => ConditionVerdict::from_checks(vec![InequalityCheck::new(
                "utility margin positive",
                0.0,
                0.0,
                true,
            )]),
        };
        out.push(named("privacy_utility", verdict));
    }
    Ok(out)
}

fn max_off_diagonal(aff: &[Vec<f64>]) -> f64 {
    let mut m = 0.0f64;
    for (i, row) in aff.iter().enumerate() {
        for (j, &a) in row.iter().enumerate() {
            if i != j {
                m = m.max(a);
            }
        }
    }
    m
}

/// Checker names in CSV column order.
pub const CHECKERS: [&str; 7] = [
    "noiseless",
    "deterministic_noise",
    "stochastic_noise",
    "uncompressed_noisy",
    "semirandom",
    "fully_random",
    "privacy_utility",
];

pub const CSV_HEADER: &str = "grid_index,replicate,seed,projector,p,lambda,lambda_mode,d,n,k,private,sigma_priv,\
eps_measured,clustering_error,rel_violation,sdp,sep,trivial_columns,solver_failures,max_kkt,isolated_vertices,\
degenerate_graph,margin_pre,rho_pre,mu_pre,margin_post,rho_post,mu_post,\
noiseless_ok,noiseless_binding,deterministic_noise_ok,deterministic_noise_binding,stochastic_noise_ok,\
stochastic_noise_binding,uncompressed_noisy_ok,uncompressed_noisy_binding,semirandom_ok,semirandom_binding,\
fully_random_ok,fully_random_binding,privacy_utility_ok,privacy_utility_binding,error";

/// Shortest round-trip text; scientific outside `[1e-4, 1e15)`.
fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{x:e}")
    } else {
        x.to_string()
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn join(v: &[f64]) -> String {
    v.iter().map(|&x| num(x)).collect::<Vec<_>>().join(";")
}

fn quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// One CSV line (without newline) in [`CSV_HEADER`] order.
pub fn csv_row(r: &ResultRecord) -> String {
    let mut f: Vec<String> = vec![
        r.grid_index.to_string(),
        r.replicate.to_string(),
        r.seed.to_string(),
        r.projector.clone(),
        opt(r.p),
        num(r.lambda),
        r.lambda_mode.name().to_string(),
        r.d.to_string(),
        r.n.to_string(),
        r.k.to_string(),
        r.private.to_string(),
        opt_num(r.sigma_priv),
        opt_num(r.eps_measured),
        opt_num(r.clustering_error),
        opt_num(r.rel_violation),
        opt(r.sdp),
        opt(r.sep),
        opt(r.trivial_columns),
        r.solver_failures.to_string(),
        num(r.max_kkt),
        r.isolated_vertices.to_string(),
        r.degenerate_graph.to_string(),
    ];
    for g in [&r.geometry_pre, &r.geometry_post] {
        match g {
            Some(g) => f.extend([num(g.margin), join(&g.rho), join(&g.mu)]),
            None => f.extend([String::new(), String::new(), String::new()]),
        }
    }
    for name in CHECKERS {
        match r.verdict(name) {
            Some(v) => f.extend([v.satisfied.to_string(), quote(&v.binding_constraint)]),
            None => f.extend([String::new(), String::new()]),
        }
    }
    f.push(quote(r.error.as_deref().unwrap_or("")));
    f.join(",")
}

fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct RunMeta<'a> {
    library: &'static str,
    version: &'static str,
    rng: &'static str,
    seed_hash: &'static str,
    records: usize,
    solver_failures: usize,
    config: &'a ExperimentConfig,
}

/// Writes `results.csv`, `records.jsonl`, `run.json` and `timings.csv` to `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, summary: &RunSummary, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    let mut jsonl = String::new();
    let mut timings = String::from("grid_index,replicate,wall_seconds\n");
    for r in &summary.records {
        csv.push_str(&csv_row(r));
        csv.push('\n');
        jsonl.push_str(&serde_json::to_string(r)?);
        jsonl.push('\n');
        let _ = writeln!(timings, "{},{},{}", r.grid_index, r.replicate, r.wall_seconds);
    }
    write_atomic(&dir.join("results.csv"), &csv)?;
    write_atomic(&dir.join("records.jsonl"), &jsonl)?;
    let meta = RunMeta {
        library: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        rng: rng::RNG_NAME,
        seed_hash: rng::SEED_HASH_NAME,
        records: summary.records.len(),
        solver_failures: summary.solver_failures,
        config: cfg,
    };
    write_atomic(&dir.join("run.json"), &serde_json::to_string_pretty(&meta)?)?;
    write_atomic(&dir.join("timings.csv"), &timings)
}

/// Mean metrics over replicates, rows = λ (grid order), columns = p.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub lambdas: Vec<f64>,
    pub ps: Vec<usize>,
    pub rel_violation: DMatrix<f64>,
    pub clustering_error: DMatrix<f64>,
    pub trivial_columns: DMatrix<f64>,
}

impl PhaseDiagram {
    /// Aggregates records; failed metrics are skipped, an empty cell is NaN.
    pub fn from_records(cfg: &ExperimentConfig, records: &[ResultRecord]) -> Result<Self> {
        let ps: Vec<usize> = cfg.p_grid().into_iter().flatten().collect();
        let nl = cfg.lambda_grid.len();
        let mut sums: [DMatrix<f64>; 3] = std::array::from_fn(|_| DMatrix::zeros(nl, ps.len()));
        let mut counts = sums.clone();
        for r in records {
            let (pi, li) = (r.grid_index / nl, r.grid_index % nl);
            let vals = [r.rel_violation, r.clustering_error, r.trivial_columns.map(|t| t as f64)];
            for (m, v) in vals.iter().enumerate() {
                if let Some(v) = v {
                    sums[m][(li, pi)] += v;
                    counts[m][(li, pi)] += 1.0;
                }
            }
        }
        let mean = |m: usize| sums[m].zip_map(&counts[m], |s, c| if c > 0.0 { s / c } else { f64::NAN });
        Ok(Self {
            lambdas: cfg.lambda_grid.clone(),
            ps,
            rel_violation: mean(0),
            clustering_error: mean(1),
            trivial_columns: mean(2),
        })
    }

    fn matrix_csv(&self, m: &DMatrix<f64>) -> String {
        let mut s = String::from("lambda");
        for p in &self.ps {
            let _ = write!(s, ",p={p}");
        }
        s.push('\n');
        for (li, l) in self.lambdas.iter().enumerate() {
            s.push_str(&num(*l));
            for pi in 0..self.ps.len() {
                let _ = write!(s, ",{}", num(m[(li, pi)]));
            }
            s.push('\n');
        }
        s
    }

    /// `phase_<metric>.csv` matrices and the long-format `phase_long.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join("phase_rel_violation.csv"), &self.matrix_csv(&self.rel_violation))?;
        write_atomic(&dir.join("phase_clustering_error.csv"), &self.matrix_csv(&self.clustering_error))?;
        write_atomic(&dir.join("phase_trivial_columns.csv"), &self.matrix_csv(&self.trivial_columns))?;
        let mut long = String::from("lambda,p,rel_violation,clustering_error,trivial_columns\n");
        for (li, l) in self.lambdas.iter().enumerate() {
            for (pi, p) in self.ps.iter().enumerate() {
                let _ = writeln!(
                    long,
                    "{},{p},{},{},{}",
                    num(*l),
                    num(self.rel_violation[(li, pi)]),
                    num(self.clustering_error[(li, pi)]),
                    num(self.trivial_columns[(li, pi)])
                );
            }
        }
        write_atomic(&dir.join("phase_long.csv"), &long)
    }
}

/// Runs the grid and aggregates it; both grids need at least two values.
pub fn phase_diagram(cfg: &ExperimentConfig) -> Result<(PhaseDiagram, RunSummary)> {
    let np = cfg.projector.as_ref().map_or(0, |p| p.p.values().len());
    if np < 2 || cfg.lambda_grid.len() < 2 {
        return Err(Error::Config(format!(
            "phase diagram needs at least 2 projection sizes and 2 lambda values, got {np} x {}",
            cfg.lambda_grid.len()
        )));
    }
    let summary = run_pipeline(cfg)?;
    Ok((PhaseDiagram::from_records(cfg, &summary.records)?, summary))
}
