//! Dense symmetric linear algebra and Hermite-tensor kernels.
//!
//! Third- and fourth-order objects are only ever materialized in the
//! projected `B`-dimensional coordinates; `d`-dimensional second-order
//! moments are exposed matrix-free through [`LinearOperator`].

mod eigen;
mod hermite;
mod joint;

pub use eigen::{orthonormalize, projector_distance, sym_eig, EigenDecomposition};
pub use hermite::{hermite2_apply, hermite3, hermite4_contract};
pub use joint::{joint_diagonalize, JointDiagonalization};

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use crate::error::{check_dim, check_finite, Error, Result};

/// Real symmetric matrix. Symmetry is exact: construction averages the
/// input with its transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    entries: Array2<f64>,
}

impl SymMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        check_dim("SymMatrix columns", r, c)?;
        if r == 0 {
            return Err(Error::contract("SymMatrix must have positive dimension"));
        }
        check_finite("SymMatrix", entries.iter())?;
        let mut entries = entries;
        for i in 0..r {
            for j in (i + 1)..r {
                let avg = 0.5 * (entries[[i, j]] + entries[[j, i]]);
                entries[[i, j]] = avg;
                entries[[j, i]] = avg;
            }
        }
        Ok(Self { entries })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
        }
    }

    pub fn from_diag(diag: &[f64]) -> Result<Self> {
        Self::new(Array2::from_diag(&Array1::from(diag.to_vec())))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Frobenius norm of the strictly off-diagonal part.
    pub fn off_diagonal_norm(&self) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += self.entries[[i, j]].powi(2);
                }
            }
        }
        acc.sqrt()
    }

    /// `Qᵀ M Q` for a `dim x k` matrix `Q`.
    pub fn congruence(&self, q: ArrayView2<f64>) -> Result<SymMatrix> {
        check_dim("congruence rows", self.dim(), q.nrows())?;
        SymMatrix::new(q.t().dot(&self.entries).dot(&q))
    }
}

/// Symmetric third-order tensor, stored densely (`dim³` entries).
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor3 {
    entries: Array3<f64>,
}

impl SymTensor3 {
    /// Symmetrizes `entries` over all six index permutations. Every
    /// permutation class is assigned a single value, so the result is
    /// symmetric bit-for-bit.
    pub fn new(entries: Array3<f64>) -> Result<Self> {
        let (a, b, c) = entries.dim();
        check_dim("SymTensor3 axis 1", a, b)?;
        check_dim("SymTensor3 axis 2", a, c)?;
        if a == 0 {
            return Err(Error::contract("SymTensor3 must have positive dimension"));
        }
        check_finite("SymTensor3", entries.iter())?;
        let n = a;
        let mut out = Array3::zeros((n, n, n));
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let perms = [
                        (i, j, k),
                        (i, k, j),
                        (j, i, k),
                        (j, k, i),
                        (k, i, j),
                        (k, j, i),
                    ];
                    let avg = perms.iter().map(|&(p, q, r)| entries[[p, q, r]]).sum::<f64>() / 6.0;
                    for &(p, q, r) in &perms {
                        out[[p, q, r]] = avg;
                    }
                }
            }
        }
        Ok(Self { entries: out })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array3::zeros((dim, dim, dim)),
        }
    }

    /// `Σᵢ weights[i] · comps[:, i]^{⊗3}`.
    pub fn from_components(weights: &[f64], comps: ArrayView2<f64>) -> Result<Self> {
        check_dim("component count", weights.len(), comps.ncols())?;
        let n = comps.nrows();
        let mut t = Array3::zeros((n, n, n));
        for (r, &w) in weights.iter().enumerate() {
            let u = comps.column(r);
            for i in 0..n {
                for j in 0..n {
                    let uij = w * u[i] * u[j];
                    for k in 0..n {
                        t[[i, j, k]] += uij * u[k];
                    }
                }
            }
        }
        Self::new(t)
    }

    pub fn dim(&self) -> usize {
        self.entries.dim().0
    }

    pub fn entries(&self) -> &Array3<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries[[i, j, k]]
    }

    pub fn frobenius(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest deviation between an entry and any of its permutations.
    pub fn max_asymmetry(&self) -> f64 {
        let n = self.dim();
        let t = &self.entries;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = t[[i, j, k]];
                    for w in [t[[i, k, j]], t[[j, i, k]], t[[j, k, i]], t[[k, i, j]], t[[k, j, i]]] {
                        worst = worst.max((v - w).abs());
                    }
                }
            }
        }
        worst
    }

    /// The matrix slice `T(·, ·, a)`.
    pub fn slice(&self, a: ArrayView1<f64>) -> Result<SymMatrix> {
        check_dim("slice vector", self.dim(), a.len())?;
        let n = self.dim();
        let mut m = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.entries[[i, j, k]] * a[k];
                }
                m[[i, j]] = acc;
            }
        }
        SymMatrix::new(m)
    }

    /// The vector `T(u, u, ·)`.
    pub fn contract2(&self, u: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let mut out = Array1::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let uij = u[i] * u[j];
                for k in 0..n {
                    out[k] += self.entries[[i, j, k]] * uij;
                }
            }
        }
        out
    }

    /// The scalar `T(u, v, w)`.
    pub fn contract3(&self, u: ArrayView1<f64>, v: ArrayView1<f64>, w: ArrayView1<f64>) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let uv = u[i] * v[j];
                for k in 0..n {
                    acc += self.entries[[i, j, k]] * uv * w[k];
                }
            }
        }
        acc
    }

    /// `T(Q, Q, Q)` for a `dim x k` matrix `Q`.
    pub fn multilinear(&self, q: ArrayView2<f64>) -> Result<SymTensor3> {
        check_dim("multilinear rows", self.dim(), q.nrows())?;
        let mut t = self.entries.clone();
        for axis in 0..3 {
            // contract `axis` with Q: move it last, multiply, move it back
            let moved = t.view().permuted_axes(match axis {
                0 => [1, 2, 0],
                1 => [0, 2, 1],
                _ => [0, 1, 2],
            });
            let (a, b, c) = moved.dim();
            let flat = moved.as_standard_layout().into_shape_with_order((a * b, c)).expect("contiguous");
            let prod = flat.dot(&q);
            let k = q.ncols();
            let back = prod.into_shape_with_order((a, b, k)).expect("contiguous");
            t = back
                .permuted_axes(match axis {
                    0 => [2, 0, 1],
                    1 => [0, 2, 1],
                    _ => [0, 1, 2],
                })
                .as_standard_layout()
                .to_owned();
        }
        SymTensor3::new(t)
    }

    pub fn scaled(&self, s: f64) -> SymTensor3 {
        SymTensor3 {
            entries: &self.entries * s,
        }
    }

    pub fn add(&self, other: &SymTensor3) -> Result<SymTensor3> {
        check_dim("tensor add", self.dim(), other.dim())?;
        Ok(SymTensor3 {
            entries: &self.entries + &other.entries,
        })
    }

    pub fn sub(&self, other: &SymTensor3) -> Result<SymTensor3> {
        check_dim("tensor sub", self.dim(), other.dim())?;
        Ok(SymTensor3 {
            entries: &self.entries - &other.entries,
        })
    }
}

/// A linear map on `R^dim`, possibly matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;

    fn apply(&self, v: ArrayView1<f64>) -> Array1<f64>;

    /// Applies the operator to every column of `block`.
    fn apply_block(&self, block: ArrayView2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(block.raw_dim());
        for (mut col_out, col_in) in out.axis_iter_mut(Axis(1)).zip(block.axis_iter(Axis(1))) {
            col_out.assign(&self.apply(col_in));
        }
        out
    }

    fn is_symmetric(&self) -> bool {
        true
    }
}

impl LinearOperator for SymMatrix {
    fn dim(&self) -> usize {
        SymMatrix::dim(self)
    }

    fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.entries.dot(&v)
    }

    fn apply_block(&self, block: ArrayView2<f64>) -> Array2<f64> {
        self.entries.dot(&block)
    }
}

/// `|⟨u, Av⟩ − ⟨v, Au⟩|` relative to `‖u‖‖v‖‖A‖`-ish scale; zero for a
/// symmetric operator up to rounding.
pub fn symmetry_defect(op: &dyn LinearOperator, u: ArrayView1<f64>, v: ArrayView1<f64>) -> f64 {
    let au = op.apply(u);
    let av = op.apply(v);
    let lhs = u.dot(&av);
    let rhs = v.dot(&au);
    let scale = (au.dot(&au).sqrt() * v.dot(&v).sqrt()).max(av.dot(&av).sqrt() * u.dot(&u).sqrt());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / scale
    }
}

/// Materializes an operator column by column. Only meant for small `dim`.
pub fn materialize(op: &dyn LinearOperator) -> Array2<f64> {
    op.apply_block(Array2::eye(op.dim()).view())
}
