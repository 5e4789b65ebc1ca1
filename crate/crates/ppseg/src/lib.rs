//! File formats, training, evaluation and benchmarks around `ppseg-core`.

pub mod ablate;
pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod dataset;
mod error;
pub mod eval;
pub mod io;
pub mod plotdata;
pub mod train;

pub use error::{Error, Result};
