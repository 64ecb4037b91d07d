//! Simulation harness for disease mapping: synthetic populations and risk
//! surfaces, replicate case datasets, BYM2 and SPDE log-Gaussian Cox process
//! fits through a Laplace-approximation engine, and the evaluation metrics
//! (RMISE, coverage, exceedance ROC/AUC).

pub mod bym;
pub mod cli;
pub mod domain;
pub mod error;
pub mod evaluation;
pub mod gmrf;
pub mod inference;
pub mod risk;
pub mod simulate;
pub mod spde;
pub mod special;

pub use error::{Error, Result};
