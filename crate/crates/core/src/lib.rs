//! Configuration-model graphs, non-backtracking operators and random lifts,
//! with exact path-expansion machinery and empirical spectral checks.

pub mod configuration;
pub mod error;
pub mod exact;
pub mod experiment;
mod hqr;
pub mod lanczos;
pub mod lift;
pub mod multigraph;
pub mod multiset;
pub mod nonbacktracking;
pub mod pathmatrices;
pub mod prooforacle;
pub mod rng;
pub mod sparse;
pub mod spectra;
pub mod tangle;

pub use error::{Error, Result};
