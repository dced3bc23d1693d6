use ndarray::{Array1, Array3, ArrayView1};

use super::SymTensor3;
use crate::error::{check_dim, check_finite, Error, Result};

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// `H₂(w)·v = (w·v) w − v`, without forming the matrix.
pub fn hermite2_apply(w: ArrayView1<f64>, v: ArrayView1<f64>) -> Result<Array1<f64>> {
    check_dim("hermite2_apply", w.len(), v.len())?;
    let wv = w.dot(&v);
    Ok(&w * wv - v)
}

/// `H₃(u)_{ijk} = uᵢuⱼuₖ − (uᵢδⱼₖ + uⱼδₖᵢ + uₖδᵢⱼ)`.
pub fn hermite3(u: ArrayView1<f64>) -> Result<SymTensor3> {
    check_finite("hermite3 input", u.iter())?;
    let n = u.len();
    if n == 0 {
        return Err(Error::contract("hermite3 needs a non-empty vector"));
    }
    let t = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        u[i] * u[j] * u[k] - (u[i] * delta(j, k) + u[j] * delta(k, i) + u[k] * delta(i, j))
    });
    SymTensor3::new(t)
}

/// `H₄(u)(·,·,·,a)` for a unit vector `a`.
///
/// With `t = u·a` the entry is
/// `uᵢuⱼuₖt − [uᵢuⱼaₖ + uᵢuₖaⱼ + uⱼuₖaᵢ + t(uᵢδⱼₖ + uⱼδᵢₖ + uₖδᵢⱼ)] + δᵢⱼaₖ + δᵢₖaⱼ + δⱼₖaᵢ`.
pub fn hermite4_contract(u: ArrayView1<f64>, a: ArrayView1<f64>) -> Result<SymTensor3> {
    check_dim("hermite4_contract", u.len(), a.len())?;
    check_finite("hermite4_contract input", u.iter().chain(a.iter()))?;
    let norm = a.dot(&a).sqrt();
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::contract(format!(
            "hermite4_contract needs a unit direction, got norm {norm}"
        )));
    }
    let n = u.len();
    let t = u.dot(&a);
    let out = Array3::from_shape_fn((n, n, n), |(i, j, k)| {
        let quartic = u[i] * u[j] * u[k] * t;
        let pairs = u[i] * u[j] * a[k]
            + u[i] * u[k] * a[j]
            + u[j] * u[k] * a[i]
            + t * (u[i] * delta(j, k) + u[j] * delta(i, k) + u[k] * delta(i, j));
        let constant = delta(i, j) * a[k] + delta(i, k) * a[j] + delta(j, k) * a[i];
        quartic - pairs + constant
    });
    SymTensor3::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeededRng, Stream};
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn hermite2_examples() {
        let e1 = array![1.0, 0.0];
        let e2 = array![0.0, 1.0];
        assert_eq!(hermite2_apply(e1.view(), e1.view()).unwrap(), array![0.0, 0.0]);
        assert_eq!(hermite2_apply(e1.view(), e2.view()).unwrap(), array![0.0, -1.0]);
        let w = array![1.0, 1.0];
        assert_eq!(hermite2_apply(w.view(), e1.view()).unwrap(), array![0.0, 1.0]);
        assert!(hermite2_apply(w.view(), array![1.0].view()).is_err());
    }

    #[test]
    fn hermite3_examples() {
        let z = hermite3(array![0.0, 0.0].view()).unwrap();
        assert!(z.entries().iter().all(|&x| x == 0.0));
        let t = hermite3(array![1.0, 0.0].view()).unwrap();
        assert_eq!(t.get(0, 0, 0), -2.0);
        assert_eq!(t.get(0, 1, 1), -1.0);
        assert_eq!(t.get(0, 0, 1), 0.0);
        assert_eq!(t.max_asymmetry(), 0.0);
    }

    #[test]
    fn hermite4_constant_part() {
        let t = hermite4_contract(array![0.0, 0.0].view(), array![1.0, 0.0].view()).unwrap();
        assert_eq!(t.get(0, 0, 0), 3.0);
        assert_eq!(t.get(0, 1, 1), 1.0);
        assert_eq!(t.get(1, 1, 0), 1.0);
        assert_eq!(t.get(1, 1, 1), 0.0);
        assert!(hermite4_contract(array![0.0, 0.0].view(), array![1.0, 1.0].view()).is_err());
    }

    // Independent dense H4 built from the pairing definition, then contracted.
    fn dense_h4_contract(u: &[f64], a: &[f64]) -> Array3<f64> {
        let n = u.len();
        let mut out = Array3::zeros((n, n, n));
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let idx = [i, j, k, l];
                        let mut pairs = 0.0;
                        for p in 0..4 {
                            for q in (p + 1)..4 {
                                let rest: Vec<usize> = (0..4).filter(|&r| r != p && r != q).collect();
                                pairs += delta(idx[p], idx[q]) * u[idx[rest[0]]] * u[idx[rest[1]]];
                            }
                        }
                        let cst = delta(i, j) * delta(k, l) + delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k);
                        out[[i, j, k]] += (u[i] * u[j] * u[k] * u[l] - pairs + cst) * a[l];
                    }
                }
            }
        }
        out
    }

    #[test]
    fn hermite4_matches_pairing_definition() {
        let mut rng = SeededRng::new(3, Stream::Custom(40));
        let u = rng.normal_vec(3);
        let a = rng.unit_vector(3);
        let fast = hermite4_contract(u.view(), a.view()).unwrap();
        let slow = dense_h4_contract(u.as_slice().unwrap(), a.as_slice().unwrap());
        for (x, y) in fast.entries().iter().zip(slow.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn dense_h3(w: &Array1<f64>) -> Array3<f64> {
        hermite3(w.view()).unwrap().entries().clone()
    }

    #[test]
    fn hermite3_commutes_with_orthonormal_projection() {
        let mut rng = SeededRng::new(5, Stream::Custom(41));
        let d = 6;
        let w = rng.normal_vec(d);
        let raw = rng.normal_matrix(d, 2);
        let v = crate::tensor::orthonormalize(raw.view()).unwrap();
        let full = SymTensor3::new(dense_h3(&w)).unwrap();
        let projected = full.multilinear(v.view()).unwrap();
        let direct = hermite3(v.t().dot(&w).view()).unwrap();
        for (x, y) in projected.entries().iter().zip(direct.entries().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn hermite2_projection_identity() {
        let mut rng = SeededRng::new(6, Stream::Custom(42));
        let d = 5;
        let w = rng.normal_vec(d);
        let v = crate::tensor::orthonormalize(rng.normal_matrix(d, 2).view()).unwrap();
        let h2 = Array2::from_shape_fn((d, d), |(i, j)| w[i] * w[j] - delta(i, j));
        let lhs = v.t().dot(&h2).dot(&v);
        let pw = v.t().dot(&w);
        for c in 0..2 {
            let col = hermite2_apply(pw.view(), v.t().dot(&v.column(c)).view()).unwrap();
            for r in 0..2 {
                assert!((lhs[[r, c]] - col[r]).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn hermite3_always_symmetric(u in proptest::collection::vec(-5.0f64..5.0, 1..5)) {
            let t = hermite3(Array1::from(u).view()).unwrap();
            prop_assert_eq!(t.max_asymmetry(), 0.0);
        }

        #[test]
        fn hermite2_is_linear_in_v(
            w in proptest::collection::vec(-3.0f64..3.0, 3),
            v1 in proptest::collection::vec(-3.0f64..3.0, 3),
            v2 in proptest::collection::vec(-3.0f64..3.0, 3),
            alpha in -2.0f64..2.0,
        ) {
            let w = Array1::from(w);
            let v1 = Array1::from(v1);
            let v2 = Array1::from(v2);
            let combo = &v1 * alpha + &v2;
            let lhs = hermite2_apply(w.view(), combo.view()).unwrap();
            let rhs = hermite2_apply(w.view(), v1.view()).unwrap() * alpha + hermite2_apply(w.view(), v2.view()).unwrap();
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
