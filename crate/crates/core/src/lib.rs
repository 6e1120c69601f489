//! Sparse subspace clustering on compressed and privatized data.

pub mod clustering;
pub mod data;
pub mod datagen;
pub mod embeddings;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod io;
pub mod privacy;
pub mod rng;
pub mod solver;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type DataMatrixF64 = data::DataMatrix<f64>;
pub type NormalizedDataMatrixF64 = data::NormalizedDataMatrix<f64>;
pub type SelfRepresentationF64 = data::SelfRepresentation<f64>;
pub type SubspaceEnsembleF64 = data::SubspaceEnsemble<f64>;
pub type ProjectionOperatorF64 = embeddings::ProjectionOperator<f64>;
pub type InstanceF64 = datagen::Instance<f64>;
pub type PrivateReleaseF64 = privacy::PrivateRelease<f64>;
