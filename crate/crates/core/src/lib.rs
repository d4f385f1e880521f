//! Differentially private subspace estimation for datasets with a spectral
//! gap, private mean estimation built on it, and the hard-instance machinery
//! used to probe the lower bounds.

pub mod baseline;
pub mod dataset;
pub mod dp;
pub mod error;
pub mod experiment;
pub mod hardness;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod robust_average;
pub mod subspace;
pub mod synthetic;

pub use error::{AbortReason, Error, Result};
