//! Reconstruction of a training batch from one gradient query at a designed
//! random network.
//!
//! The crate is split the same way the attack is:
//!
//! * [`tensor`] holds the dense symmetric kernels (Hermite tensors, Jacobi
//!   eigen-solvers, joint diagonalization) that everything else builds on.
//! * [`activation`] and [`model`] describe the victim network, its Gaussian
//!   derivative moments and the single-shot gradient oracle.
//! * [`inversion`] turns a [`model::GradientResponse`] into reconstructed
//!   inputs and labels.

pub mod activation;
pub mod error;
pub mod inversion;
pub mod model;
pub mod rng;
pub mod tensor;

pub use activation::{Activation, ActivationKind};
pub use error::{Error, Result};
pub use inversion::{
    AttackConfig, MomentEstimates, ReconstructionResult, RecoveryMode, SubspaceSource, Variant,
};
pub use model::{Batch, GradientResponse, ModelParams, QueryBudget};
pub use tensor::{EigenDecomposition, LinearOperator, SymMatrix, SymTensor3};
