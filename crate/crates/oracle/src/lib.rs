//! Reference oracles for `gradinv-core`.
//!
//! Everything here is deliberately naive: dense Hermite tensors built from
//! their pairing definition, finite differences through a separately written
//! forward pass, a closed-form rank-two decomposition and symbolic Gaussian
//! moments of polynomials. None of it calls the estimator code it is used to
//! check. The activation functions and the seeded generator are shared, since
//! they define the problem rather than solve it.

mod brute;
mod finite_diff;
mod poly;
pub mod selftest;
mod stein;

pub use brute::{brute_force_decompose, OracleComponent};
pub use finite_diff::{finite_diff_grad, FiniteDiffGradient};
pub use poly::gaussian_poly_moment;
pub use selftest::{run_selftest, SelftestCase, SelftestLevel};
pub use stein::{hermite_dense, mc_stein_check, SteinCheck};

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    /// The input lies outside what the oracle can decide (e.g. a tensor of
    /// higher rank than requested).
    #[error("oracle not applicable: {0}")]
    Inapplicable(String),
    #[error("invalid oracle input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] gradinv_core::Error),
}

pub type Result<T> = std::result::Result<T, OracleError>;
