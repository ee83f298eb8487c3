//! Penalized least-squares functional LDA for functions on triangulated
//! surfaces, with an optional RKHS term for subject geometry, plus an
//! FPCA + LDA baseline and a simulation harness.

pub mod baseline;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod fem;
pub mod io;
pub mod lsqr;
pub mod mesh;
pub mod method;
pub mod report;
pub mod rkhs;
pub mod simgen;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
