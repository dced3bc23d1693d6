use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{SeededRng, Stream};
use crate::tensor::{orthonormalize, LinearOperator};

#[derive(Debug, Clone)]
pub struct SubspaceEstimate {
    /// Orthonormal `d x B` basis.
    pub v: Array2<f64>,
    pub iterations: usize,
    /// Projector change `‖VₜVₜᵀ − Vₜ₋₁Vₜ₋₁ᵀ‖_F` at the last step.
    pub residual: f64,
    pub converged: bool,
    /// Set when the iteration stalled well above tolerance, which happens
    /// when the `B`-th and `(B+1)`-th eigenvalues are close in magnitude.
    pub eigengap_warning: bool,
}

/// Block power iteration for the `B` eigenvalues of largest magnitude.
pub fn estimate_subspace(
    op: &dyn LinearOperator,
    b: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<SubspaceEstimate> {
    let d = op.dim();
    if b == 0 || b > d {
        return Err(Error::contract(format!("subspace rank {b} outside 1..={d}")));
    }
    if !op.is_symmetric() {
        return Err(Error::contract("power iteration needs a symmetric operator"));
    }
    let mut rng = SeededRng::new(seed, Stream::PowerInit);
    let mut v = orthonormalize(rng.normal_matrix(d, b).view())?;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let next = orthonormalize(op.apply_block(v.view()).view())?;
        // ‖P₁ − P₂‖_F = √2 ‖(I − P₁)V₂‖_F for equal-rank projectors
        let leak = &next - &v.dot(&v.t().dot(&next));
        residual = std::f64::consts::SQRT_2 * leak.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = next;
        if residual < tol {
            break;
        }
    }
    let converged = residual < tol;
    Ok(SubspaceEstimate {
        v,
        iterations,
        residual,
        converged,
        eigengap_warning: !converged && residual > 10.0 * tol,
    })
}
