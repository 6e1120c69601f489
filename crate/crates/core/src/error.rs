use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("column {0} has (near-)zero norm")]
    ZeroColumn(usize),
    #[error("{path}: row {row}, column {col}: cannot parse {token:?} as a number")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        token: String,
    },
    #[error("{path}: row {row} has {found} fields, expected {expected}")]
    RaggedRows {
        path: PathBuf,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad dimensions: {0}")]
    BadDimensions(String),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("basis is not orthonormal (max deviation {0:.3e})")]
    NotOrthonormal(f64),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("self-representation has nonzero diagonal entry at {0}")]
    DiagonalEntry(usize),
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("column {index}: {count} column solve(s) failed, first: {first}")]
    ColumnFailures {
        index: usize,
        count: usize,
        first: Box<Error>,
    },
    #[error("target is not in the span of the remaining columns (residual {0:.3e})")]
    Infeasible(f64),
    #[error("projected dual direction is degenerate for every point of cluster {0}")]
    ProjectionDegenerate(usize),
    #[error("points span {found} dimensions, expected {expected}")]
    RankDeficient { expected: usize, found: usize },
    #[error("similarity graph has {zero_rows} isolated vertices out of {n}, too many for {k} clusters")]
    DegenerateGraph { zero_rows: usize, n: usize, k: usize },
    #[error("vector has zero norm")]
    ZeroVector,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
