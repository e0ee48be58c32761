//! Computational laboratory for random Gaussian polytopes
//! `P = conv{±X_1, …, ±X_N}` and the normed spaces they induce.

pub mod cotype;
pub mod embedding;
pub mod ensemble;
pub mod error;
pub mod geometry;
pub mod grassmann;

pub mod l1norm;
pub mod numerics;
pub mod rng;

pub use cotype::{CotypeEstimate, NormOracle, SignMode};
pub use ensemble::{derive_stream, sample_ensemble, Ensemble, EnsembleConfig};
pub use error::{Error, ErrorClass, Result};
pub use l1norm::{minkowski_norm, CoefficientVector, L1Solver, NormCertificate};
pub use numerics::Subspace;
