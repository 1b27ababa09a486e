//! Numerical thermodynamic formalism on subshifts of finite type.
//!
//! The crate computes topological pressure for almost-additive potentials
//! (k-step tables and positive matrix cocycles), weak Gibbs metrics and
//! their ball families, Birkhoff and Legendre multifractal spectra with
//! witness Markov measures, and dimensions of self-similar carpets through
//! their symbolic coding.
//!
//! Heavy loops are data-parallel through rayon when the `parallel` feature
//! (default) is enabled and fall back to sequential execution otherwise;
//! either way reductions run over a fixed tree, so results are identical.

pub mod error;
pub mod exec;
pub mod sft;

pub mod potential;

pub mod pressure;

pub mod measures;

pub mod metric;

pub mod spectrum;

pub mod geometry;

pub mod checks;

mod optim;

pub use error::{Error, Result};
