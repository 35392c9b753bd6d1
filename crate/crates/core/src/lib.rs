//! Spectral initialization and generalized power method refinement for
//! row-community recovery in bipartite stochastic block models.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod gpm;
pub mod harness;
pub mod hl_baseline;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod spec_init;

pub use error::{Error, Result};
