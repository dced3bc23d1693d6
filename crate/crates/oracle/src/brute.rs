use gradinv_core::SymTensor3;
use nalgebra::{DMatrix, DVector, Matrix2};
use ndarray::Array1;

use crate::{OracleError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleComponent {
    pub weight: f64,
    pub vector: Array1<f64>,
}

const RANK_TOL: f64 = 1e-9;
const FIT_TOL: f64 = 1e-8;

/// Exact CP decomposition of a symmetric tensor of dimension ≤ 3 and rank
/// ≤ `b` ≤ 2.
///
/// The range of the unfolding gives the span of the components. In rank two
/// the components are the eigenvectors of `S₁ S₂⁻¹` for two slices taken in
/// that span; weights follow from least squares and every sign orientation
/// is tried so that the returned weights are non-negative. Components come
/// sorted by decreasing weight.
pub fn brute_force_decompose(t: &SymTensor3, b: usize) -> Result<Vec<OracleComponent>> {
    let d = t.dim();
    if d == 0 || d > 3 || b == 0 || b > 2 {
        return Err(OracleError::Invalid(format!("needs dimension ≤ 3 and rank ≤ 2, got d={d}, B={b}")));
    }
    let e = t.entries();
    let unfold = DMatrix::from_fn(d, d * d, |i, jk| e[[i, jk / d, jk % d]]);
    let svd = unfold.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left vectors requested");
    let smax = svd.singular_values.max();
    if smax == 0.0 {
        return Ok(Vec::new());
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &c| svd.singular_values[c].total_cmp(&svd.singular_values[a]));
    let rank = order.iter().filter(|&&i| svd.singular_values[i] > RANK_TOL * smax).count();
    if rank > b {
        return Err(OracleError::Inapplicable(format!("unfolding has rank {rank} > {b}")));
    }
    let basis: Vec<DVector<f64>> = order[..rank].iter().map(|&i| u.column(i).into_owned()).collect();

    let directions: Vec<DVector<f64>> = if rank == 1 {
        vec![basis[0].clone()]
    } else {
        let proj = |i: usize, j: usize, k: usize| -> f64 {
            let mut s = 0.0;
            for a in 0..d {
                for bb in 0..d {
                    for c in 0..d {
                        s += e[[a, bb, c]] * basis[i][a] * basis[j][bb] * basis[k][c];
                    }
                }
            }
            s
        };
        let slice = |c: [f64; 2]| {
            Matrix2::from_fn(|i, j| c[0] * proj(i, j, 0) + c[1] * proj(i, j, 1))
        };
        // the best-conditioned slice is inverted, its orthogonal partner is not
        let angles = (0..8).map(|k| k as f64 * std::f64::consts::PI / 8.0);
        let theta = angles
            .max_by(|&a, &c| {
                let da = slice([a.cos(), a.sin()]).determinant().abs();
                let dc = slice([c.cos(), c.sin()]).determinant().abs();
                da.total_cmp(&dc)
            })
            .expect("nonempty");
        let s2 = slice([theta.cos(), theta.sin()]);
        let s1 = slice([-theta.sin(), theta.cos()]);
        let inv = s2
            .try_inverse()
            .ok_or_else(|| OracleError::Inapplicable("no invertible slice in the component span".into()))?;
        let m = s1 * inv;
        let eig = m
            .eigenvalues()
            .ok_or_else(|| OracleError::Inapplicable("complex slice eigenvalues".into()))?;
        eig.iter()
            .map(|&mu| {
                let shifted = m - Matrix2::identity() * mu;
                let v = shifted.svd(false, true).v_t.expect("right vectors requested");
                let null = v.row(1).transpose();
                &basis[0] * null[0] + &basis[1] * null[1]
            })
            .collect()
    };

    let target = DVector::from_iterator(d * d * d, e.iter().cloned());
    let mut best: Option<(f64, Vec<OracleComponent>)> = None;
    for mask in 0..(1usize << directions.len()) {
        let dirs: Vec<DVector<f64>> = directions
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let v = v.normalize();
                if mask >> i & 1 == 1 {
                    -v
                } else {
                    v
                }
            })
            .collect();
        let design = DMatrix::from_fn(d * d * d, dirs.len(), |idx, c| {
            let (i, j, k) = (idx / (d * d), idx / d % d, idx % d);
            dirs[c][i] * dirs[c][j] * dirs[c][k]
        });
        let lambda = design
            .clone()
            .svd(true, true)
            .solve(&target, 1e-14)
            .map_err(|e| OracleError::Inapplicable(e.to_string()))?;
        if lambda.iter().any(|&l| l < 0.0) {
            continue;
        }
        let resid = (&design * &lambda - &target).norm() / target.norm();
        if best.as_ref().is_none_or(|(r, _)| resid < *r) {
            let comps = dirs
                .iter()
                .zip(lambda.iter())
                .map(|(v, &w)| OracleComponent {
                    weight: w,
                    vector: Array1::from_iter(v.iter().cloned()),
                })
                .collect();
            best = Some((resid, comps));
        }
    }
    let (resid, mut comps) =
        best.ok_or_else(|| OracleError::Inapplicable("no sign orientation fits the tensor".into()))?;
    if resid > FIT_TOL {
        return Err(OracleError::Inapplicable(format!(
            "relative residual {resid:.2e}: not a sum of {b} rank-one terms"
        )));
    }
    comps.sort_by(|a, c| c.weight.total_cmp(&a.weight));
    Ok(comps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn tensor(weights: &[f64], cols: Array2<f64>) -> SymTensor3 {
        SymTensor3::from_components(weights, cols.view()).unwrap()
    }

    #[test]
    fn single_axis_component() {
        let t = tensor(&[5.0], array![[1.0], [0.0], [0.0]]);
        let c = brute_force_decompose(&t, 2).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c[0].weight - 5.0).abs() < 1e-12);
        assert!((&c[0].vector - &array![1.0, 0.0, 0.0]).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn mixed_sign_rotated_pair() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let u1 = array![s, s, 0.0];
        let u2 = array![s, -s, 0.0];
        let mut cols = Array2::zeros((3, 2));
        cols.column_mut(0).assign(&u1);
        cols.column_mut(1).assign(&u2);
        let c = brute_force_decompose(&tensor(&[2.0, -3.0], cols), 2).unwrap();
        // −3·u₂⊗³ = 3·(−u₂)⊗³
        assert!((c[0].weight - 3.0).abs() < 1e-10);
        assert!((&c[0].vector + &u2).iter().all(|v| v.abs() < 1e-10));
        assert!((c[1].weight - 2.0).abs() < 1e-10);
        assert!((&c[1].vector - &u1).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn rank_three_is_rejected() {
        let t = tensor(&[1.0, 2.0, 3.0], Array2::eye(3));
        assert!(matches!(brute_force_decompose(&t, 2), Err(OracleError::Inapplicable(_))));
    }

    #[test]
    fn hidden_rank_in_two_dims_is_rejected() {
        // x²y has real rank 3 but its unfolding only has rank 2
        let mut e = ndarray::Array3::zeros((2, 2, 2));
        e[[0, 0, 1]] = 1.0;
        let t = SymTensor3::new(e).unwrap();
        assert!(matches!(brute_force_decompose(&t, 2), Err(OracleError::Inapplicable(_))));
    }
}
