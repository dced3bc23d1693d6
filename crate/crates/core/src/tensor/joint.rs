use ndarray::{Array1, Array2};

use super::SymMatrix;
use crate::error::{check_dim, Error, Result};

/// Output of [`joint_diagonalize`].
#[derive(Debug, Clone)]
pub struct JointDiagonalization {
    /// Orthogonal matrix whose columns are the shared eigenvectors.
    pub q: Array2<f64>,
    /// Diagonal of `QᵀMₗQ` for each input matrix.
    pub diags: Vec<Array1<f64>>,
    /// Remaining off-diagonal mass relative to the total mass.
    pub off_residual: f64,
    pub sweeps: usize,
    /// False when the sweep budget ran out first.
    pub converged: bool,
}

fn off_mass(mats: &[Array2<f64>]) -> (f64, f64) {
    let mut off = 0.0;
    let mut total = 0.0;
    for a in mats {
        for ((i, j), &x) in a.indexed_iter() {
            total += x * x;
            if i != j {
                off += x * x;
            }
        }
    }
    (off, total)
}

/// Cyclic Jacobi joint diagonalization of symmetric matrices.
///
/// Each `(p, q)` rotation angle minimizes the summed off-diagonal mass
/// across all matrices (closed-form 2x2 eigenproblem). Sweeps stop once
/// the relative decrease of that mass falls below `tol`.
pub fn joint_diagonalize(mats: &[SymMatrix], tol: f64, max_sweeps: usize) -> Result<JointDiagonalization> {
    let first = mats
        .first()
        .ok_or_else(|| Error::contract("joint_diagonalize needs at least one matrix"))?;
    let n = first.dim();
    for m in mats {
        check_dim("joint_diagonalize", n, m.dim())?;
    }
    let mut work: Vec<Array2<f64>> = mats.iter().map(|m| m.entries().clone()).collect();
    let mut q = Array2::<f64>::eye(n);

    let (mut off, total) = off_mass(&work);
    let floor = (1e-15f64).powi(2) * total;
    let mut sweeps = 0;
    let mut converged = off <= floor;
    while !converged && sweeps < max_sweeps {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for r in (p + 1)..n {
                let (mut g11, mut g12, mut g22) = (0.0, 0.0, 0.0);
                for a in &work {
                    let h1 = a[[p, p]] - a[[r, r]];
                    let h2 = a[[p, r]] + a[[r, p]];
                    g11 += h1 * h1;
                    g12 += h1 * h2;
                    g22 += h2 * h2;
                }
                let ton = g11 - g22;
                let toff = 2.0 * g12;
                let theta = 0.5 * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (s, c) = theta.sin_cos();
                if s.abs() <= 1e-16 {
                    continue;
                }
                rotated = true;
                for a in work.iter_mut() {
                    for k in 0..n {
                        let ap = a[[k, p]];
                        let ar = a[[k, r]];
                        a[[k, p]] = c * ap + s * ar;
                        a[[k, r]] = -s * ap + c * ar;
                    }
                    for k in 0..n {
                        let ap = a[[p, k]];
                        let ar = a[[r, k]];
                        a[[p, k]] = c * ap + s * ar;
                        a[[r, k]] = -s * ap + c * ar;
                    }
                }
                for k in 0..n {
                    let qp = q[[k, p]];
                    let qr = q[[k, r]];
                    q[[k, p]] = c * qp + s * qr;
                    q[[k, r]] = -s * qp + c * qr;
                }
            }
        }
        let (next, _) = off_mass(&work);
        let decrease = if off > 0.0 { (off - next) / off } else { 0.0 };
        off = next;
        if !rotated || off <= floor || decrease < tol {
            converged = true;
        }
    }

    let diags = work.iter().map(|a| a.diag().to_owned()).collect();
    let off_residual = if total > 0.0 { (off / total).sqrt() } else { 0.0 };
    Ok(JointDiagonalization {
        q,
        diags,
        off_residual,
        sweeps,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeededRng, Stream};
    use crate::tensor::orthonormalize;
    use ndarray::array;

    fn random_orthogonal(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed, Stream::Custom(60));
        orthonormalize(rng.normal_matrix(n, n).view()).unwrap()
    }

    // best signed match of each reference column among the recovered columns
    fn column_recovery_error(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..want.ncols() {
            let w = want.column(c);
            let best = (0..got.ncols())
                .map(|k| {
                    let g = got.column(k);
                    let s = g.dot(&w).signum();
                    (&g * s - w).iter().map(|x| x * x).sum::<f64>().sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
        }
        worst
    }

    fn commuting_pair(q: &Array2<f64>) -> Vec<SymMatrix> {
        [array![1.0, 2.0, 3.0], array![4.0, -1.0, 2.0]]
            .into_iter()
            .map(|d| SymMatrix::new(q.dot(&Array2::from_diag(&d)).dot(&q.t())).unwrap())
            .collect()
    }

    #[test]
    fn single_diagonal_matrix() {
        let m = SymMatrix::from_diag(&[2.0, -1.0, 5.0]).unwrap();
        let jd = joint_diagonalize(&[m], 1e-12, 100).unwrap();
        assert_eq!(jd.q, Array2::<f64>::eye(3));
        assert_eq!(jd.diags[0], array![2.0, -1.0, 5.0]);
        assert!(jd.converged);
    }

    #[test]
    fn exact_commuting_pair() {
        let q = random_orthogonal(3, 17);
        let jd = joint_diagonalize(&commuting_pair(&q), 1e-12, 100).unwrap();
        assert!(jd.converged);
        assert!(jd.off_residual < 1e-10);
        assert!(column_recovery_error(&jd.q, &q) < 1e-9);
    }

    #[test]
    fn noisy_pair_degrades_gracefully() {
        let q = random_orthogonal(3, 17);
        let clean = joint_diagonalize(&commuting_pair(&q), 1e-12, 100).unwrap();
        let mut rng = SeededRng::new(18, Stream::Custom(61));
        let noisy: Vec<SymMatrix> = commuting_pair(&q)
            .into_iter()
            .map(|m| {
                let e = rng.normal_matrix(3, 3) * 1e-6;
                SymMatrix::new(m.entries() + &e).unwrap()
            })
            .collect();
        let jd = joint_diagonalize(&noisy, 1e-12, 100).unwrap();
        let err = column_recovery_error(&jd.q, &clean.q);
        assert!(err < 1e-4, "recovery error {err}");
    }

    #[test]
    fn rejects_bad_input() {
        assert!(joint_diagonalize(&[], 1e-12, 10).is_err());
        let a = SymMatrix::identity(2);
        let b = SymMatrix::identity(3);
        assert!(joint_diagonalize(&[a, b], 1e-12, 10).is_err());
    }
}
