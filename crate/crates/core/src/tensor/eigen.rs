use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::SymMatrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Spectral decomposition with values sorted by decreasing magnitude and
/// eigenvectors stored as columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    pub sweeps: usize,
}

impl EigenDecomposition {
    /// `Σ λᵢ vᵢvᵢᵀ`.
    pub fn reconstruct(&self) -> Array2<f64> {
        let scaled = &self.vectors * &self.values.view().insert_axis(Axis(0));
        scaled.dot(&self.vectors.t())
    }

    /// The `k` leading eigenvectors (by magnitude) as a `dim x k` matrix.
    pub fn leading(&self, k: usize) -> Array2<f64> {
        self.vectors.slice(ndarray::s![.., ..k]).to_owned()
    }
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
pub fn sym_eig(m: &SymMatrix) -> Result<EigenDecomposition> {
    let n = m.dim();
    let mut a = m.entries().clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = m.frobenius();
    let target = 1e-14 * scale;
    let accept = 1e-12 * scale;

    let off = |a: &Array2<f64>| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                acc += 2.0 * a[[i, j]] * a[[i, j]];
            }
        }
        acc.sqrt()
    };

    let mut sweeps = 0;
    let mut residual = off(&a);
    while residual > target && sweeps < MAX_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
        let next = off(&a);
        // rounding floor: another sweep cannot help
        if next >= residual && next <= accept {
            residual = next;
            break;
        }
        residual = next;
    }
    if residual > accept {
        return Err(Error::NotConverged {
            what: "symmetric eigensolver",
            iterations: sweeps,
            residual,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].abs().total_cmp(&a[[i, i]].abs()));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(EigenDecomposition {
        values,
        vectors,
        sweeps,
    })
}

/// Gram-Schmidt with one re-orthogonalization pass.
///
/// A column whose component outside the span of its predecessors is below
/// `1e-12` of its own norm is treated as rank deficiency.
pub fn orthonormalize(m: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (d, k) = m.dim();
    if k > d {
        return Err(Error::Degenerate(format!(
            "cannot orthonormalize {k} columns in dimension {d}"
        )));
    }
    let mut q = m.to_owned();
    for j in 0..k {
        let original = q.column(j).dot(&q.column(j)).sqrt();
        if !original.is_finite() {
            return Err(Error::contract("orthonormalize: non-finite column"));
        }
        for _ in 0..2 {
            for i in 0..j {
                let proj = q.column(i).dot(&q.column(j));
                let qi = q.column(i).to_owned();
                q.column_mut(j).scaled_add(-proj, &qi);
            }
        }
        let norm = q.column(j).dot(&q.column(j)).sqrt();
        if original == 0.0 || norm <= 1e-12 * original {
            return Err(Error::Degenerate(format!(
                "column {j} is linearly dependent on its predecessors"
            )));
        }
        q.column_mut(j).mapv_inplace(|x| x / norm);
    }
    Ok(q)
}

/// Frobenius distance between the orthogonal projectors onto the column
/// spans of `a` and `b` (both assumed orthonormal).
pub fn projector_distance(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    let pa = a.dot(&a.t());
    let pb = b.dot(&b.t());
    (&pa - &pb).iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeededRng, Stream};
    use ndarray::array;
    use proptest::prelude::*;

    fn random_orthogonal(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeededRng::new(seed, Stream::Custom(50));
        orthonormalize(rng.normal_matrix(n, n).view()).unwrap()
    }

    fn assert_column_match(a: ArrayView2<f64>, b: ArrayView2<f64>, tol: f64) {
        for c in 0..a.ncols() {
            let dot = a.column(c).dot(&b.column(c));
            let s = dot.signum();
            for r in 0..a.nrows() {
                assert!((a[[r, c]] - s * b[[r, c]]).abs() < tol, "column {c}");
            }
        }
    }

    #[test]
    fn diagonal_input() {
        let e = sym_eig(&SymMatrix::from_diag(&[1.0, 3.0]).unwrap()).unwrap();
        assert_eq!(e.values, array![3.0, 1.0]);
        assert_eq!(e.vectors.column(0).mapv(f64::abs), array![0.0, 1.0]);
    }

    #[test]
    fn swap_matrix() {
        let e = sym_eig(&SymMatrix::new(array![[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        let mut vals = e.values.to_vec();
        vals.sort_by(f64::total_cmp);
        assert!((vals[0] + 1.0).abs() < 1e-15 && (vals[1] - 1.0).abs() < 1e-15);
        let h = 1.0 / 2f64.sqrt();
        for c in 0..2 {
            let v = e.vectors.column(c);
            assert!((v[0].abs() - h).abs() < 1e-15 && (v[1].abs() - h).abs() < 1e-15);
        }
    }

    #[test]
    fn recovers_constructed_spectrum() {
        let q = random_orthogonal(3, 7);
        let d = Array2::from_diag(&array![5.0, 2.0, -1.0]);
        let m = SymMatrix::new(q.dot(&d).dot(&q.t())).unwrap();
        let e = sym_eig(&m).unwrap();
        for (got, want) in e.values.iter().zip([5.0, 2.0, -1.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_column_match(e.vectors.view(), q.view(), 1e-9);
    }

    #[test]
    fn orthonormalize_examples() {
        let i3 = Array2::<f64>::eye(3);
        assert_eq!(orthonormalize(i3.view()).unwrap(), i3);
        let col = orthonormalize(array![[3.0], [4.0]].view()).unwrap();
        assert!((col[[0, 0]] - 0.6).abs() < 1e-15 && (col[[1, 0]] - 0.8).abs() < 1e-15);
        assert!(orthonormalize(array![[1.0, 2.0], [1.0, 2.0]].view()).is_err());
        assert!(orthonormalize(array![[0.0], [0.0]].view()).is_err());
    }

    #[test]
    fn orthonormalize_random_preserves_span() {
        let mut rng = SeededRng::new(11, Stream::Custom(51));
        let m = rng.normal_matrix(10, 3);
        let q = orthonormalize(m.view()).unwrap();
        let gram = q.t().dot(&q);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-12);
            }
        }
        // projector onto span(m) via normal equations, independent of Gram-Schmidt
        let g = m.t().dot(&m);
        let e = sym_eig(&SymMatrix::new(g).unwrap()).unwrap();
        let inv = e.vectors.dot(&Array2::from_diag(&e.values.mapv(|x| 1.0 / x))).dot(&e.vectors.t());
        let p_ref = m.dot(&inv).dot(&m.t());
        let p_q = q.dot(&q.t());
        let diff = (&p_ref - &p_q).iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff < 1e-10);
    }

    proptest! {
        #[test]
        fn reconstruction_is_identity(entries in proptest::collection::vec(-10.0f64..10.0, 16)) {
            let m = SymMatrix::new(Array2::from_shape_vec((4, 4), entries).unwrap()).unwrap();
            let e = sym_eig(&m).unwrap();
            let rec = e.reconstruct();
            let err = (&rec - m.entries()).iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-8 * m.frobenius().max(1e-300));
            let gram = e.vectors.t().dot(&e.vectors);
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((gram[[i, j]] - want).abs() < 1e-10);
                }
            }
            for w in e.values.windows(2) {
                prop_assert!(w[0].abs() >= w[1].abs());
            }
        }
    }
}
