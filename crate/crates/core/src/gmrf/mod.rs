//! Sparse symmetric linear algebra for Gaussian Markov random fields:
//! Cholesky factorisation under a minimum-degree ordering, solves,
//! log-determinants, sampling (optionally under hard linear constraints)
//! and the selected inverse.

mod cholesky;
mod constraint;
mod ordering;
mod sparse;

pub use cholesky::{cholesky, CholeskyFactor, SelectedInverse, SymbolicCholesky};
pub use constraint::{sample_constrained, ConstraintSet, Kriging};
pub use ordering::minimum_degree;
pub use sparse::{SparseMatrix, SparseSymMatrix};
