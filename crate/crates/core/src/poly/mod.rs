//! Sparse multivariate polynomials, dense univariate restrictions, and the
//! exact interval minimizer used by the coordinate solver.

mod basis;
mod sparse;
mod univariate;

pub use basis::{
    basis_size, enumerate_basis, enumerate_basis_capped, enumerate_basis_with_leading_cap,
    grlex_cmp, DEFAULT_MAX_BASIS,
};
pub use sparse::{Monomial, SparsePolynomial, PRUNE_RELATIVE};
pub use univariate::{univariate_min_on_interval, Interval, UnivariatePolynomial, MAX_MINIMIZE_DEGREE};

pub(crate) use sparse::monomial_value;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("coordinate {index} out of range for {n_vars} variables")]
    CoordinateOutOfRange { index: usize, n_vars: usize },
    #[error("term of degree {term_degree} exceeds degree bound {bound}")]
    DegreeBound { term_degree: u32, bound: u32 },
    #[error("basis of {requested} monomials exceeds the limit of {limit}")]
    Capacity { requested: u128, limit: usize },
    #[error("polynomial must have at least one variable")]
    NoVariables,
    #[error("non-finite coefficient or bound")]
    NonFinite,
    #[error("interval lower bound {lo} exceeds upper bound {hi}")]
    InvertedInterval { lo: f64, hi: f64 },
    #[error("univariate degree {degree} exceeds minimizer limit {limit}")]
    DegreeTooHigh { degree: usize, limit: usize },
}
