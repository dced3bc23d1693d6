use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{check_dim, Error, Result};
use crate::rng::{SeededRng, Stream};
use crate::tensor::{joint_diagonalize, sym_eig, SymMatrix, SymTensor3};

const ASCENT_STEPS: usize = 300;

/// One rank-one term `weight · vector^{⊗3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub weight: f64,
    pub vector: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Sorted by decreasing `|weight|`.
    pub components: Vec<Component>,
    pub joint_residual: f64,
    pub sweeps: usize,
    pub converged: bool,
    /// False when no positive-definite slice was found and the raw slices
    /// were diagonalized directly (exact only for orthogonal components).
    pub whitened: bool,
    pub warnings: Vec<String>,
}

/// Symmetric CP decomposition of a rank-`B` tensor in `B` dimensions.
///
/// A slice `K = T(·,·,b)` is chosen to be positive definite (maximizing its
/// smallest eigenvalue, a concave function of `b`), the `L` random slices
/// `T(·,·,aₗ)` are whitened by `K^{-1/2}` and jointly diagonalized, and the
/// rotation is mapped back through `K^{1/2}`. Whitening makes the method
/// exact for non-orthogonal components. Weights are then fitted to the
/// whole tensor by least squares.
pub fn decompose_projected(
    t: &SymTensor3,
    b: usize,
    l: usize,
    seed: u64,
    joint_tol: f64,
    joint_max_sweeps: usize,
) -> Result<Decomposition> {
    check_dim("tensor dimension", b, t.dim())?;
    if l < 2 {
        return Err(Error::contract(format!("need at least 2 random slices, got {l}")));
    }
    let scale = t.frobenius();
    if scale == 0.0 {
        return Err(Error::Degenerate("zero tensor has no components".into()));
    }
    let mut warnings = Vec::new();

    let mut rng = SeededRng::new(seed, Stream::Projections);
    let dirs: Vec<Array1<f64>> = (0..l).map(|_| rng.unit_vector(b)).collect();
    let slices = dirs.iter().map(|a| t.slice(a.view())).collect::<Result<Vec<_>>>()?;

    let (kdir, kmin) = whitening_direction(t, &dirs)?;
    let whitened = kmin > 1e-12 * scale;
    let (vectors, jd) = if whitened {
        let k = sym_eig(&t.slice(kdir.view())?)?;
        let root = k.values.mapv(f64::sqrt);
        let w_half = scaled_gram(&k.vectors, &root.mapv(|x| 1.0 / x));
        let k_half = scaled_gram(&k.vectors, &root);
        let white = slices
            .iter()
            .map(|m| SymMatrix::new(w_half.dot(m.entries()).dot(&w_half)))
            .collect::<Result<Vec<_>>>()?;
        let jd = joint_diagonalize(&white, joint_tol, joint_max_sweeps)?;
        (k_half.dot(&jd.q), jd)
    } else {
        warnings.push(format!(
            "no positive-definite slice (best smallest eigenvalue {kmin:.3e}); diagonalizing raw slices"
        ));
        let jd = joint_diagonalize(&slices, joint_tol, joint_max_sweeps)?;
        (jd.q.clone(), jd)
    };
    if !jd.converged {
        warnings.push(format!(
            "joint diagonalization stopped after {} sweeps (residual {:.3e})",
            jd.sweeps, jd.off_residual
        ));
    }

    let mut units = Vec::with_capacity(b);
    for c in 0..b {
        let col = vectors.column(c);
        let n = col.dot(&col).sqrt();
        if !(n > 0.0) {
            return Err(Error::Degenerate("recovered a zero component".into()));
        }
        units.push(&col / n);
    }
    let weights = fit_weights(t, &units)?;
    let max = weights.iter().fold(0.0f64, |acc, w| acc.max(w.abs()));
    if weights.iter().any(|w| w.abs() < 1e-10 * max) {
        warnings.push("rank-deficient decomposition: a component weight is negligible".into());
    }
    let mut components: Vec<Component> = weights
        .into_iter()
        .zip(units)
        .map(|(weight, vector)| Component { weight, vector })
        .collect();
    components.sort_by(|x, y| y.weight.abs().total_cmp(&x.weight.abs()));
    Ok(Decomposition {
        components,
        joint_residual: jd.off_residual,
        sweeps: jd.sweeps,
        converged: jd.converged,
        whitened,
        warnings,
    })
}

// E diag(s) Eᵀ
fn scaled_gram(e: &Array2<f64>, s: &Array1<f64>) -> Array2<f64> {
    let scaled = e * &s.view().insert_axis(ndarray::Axis(0));
    scaled.dot(&e.t())
}

fn smallest_eig(m: &SymMatrix) -> Result<(f64, Array1<f64>)> {
    let e = sym_eig(m)?;
    let (idx, val) = e
        .values
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty spectrum");
    Ok((val, e.vectors.column(idx).to_owned()))
}

/// Unit `b` maximizing `λ_min(T(·,·,b))` by projected supergradient ascent
/// (`T(v,v,·)` is a supergradient for the minimizing eigenvector `v`).
fn whitening_direction(t: &SymTensor3, dirs: &[Array1<f64>]) -> Result<(Array1<f64>, f64)> {
    let n = t.dim();
    let trace: Array1<f64> = Array1::from_shape_fn(n, |k| (0..n).map(|i| t.get(i, i, k)).sum());
    let mut starts: Vec<Array1<f64>> = Vec::with_capacity(dirs.len() + 2);
    let tn = trace.dot(&trace).sqrt();
    if tn > 0.0 {
        starts.push(&trace / tn);
        starts.push(-&trace / tn);
    }
    starts.extend(dirs.iter().cloned());

    let mut best = (starts[0].clone(), f64::NEG_INFINITY);
    for s in &starts {
        let (val, _) = smallest_eig(&t.slice(s.view())?)?;
        if val > best.1 {
            best = (s.clone(), val);
        }
    }
    let mut x = best.0.clone();
    for step in 0..ASCENT_STEPS {
        let (val, v) = smallest_eig(&t.slice(x.view())?)?;
        if val > best.1 {
            best = (x.clone(), val);
        }
        let g = t.contract2(v.view());
        let gn = g.dot(&g).sqrt();
        if gn == 0.0 {
            break;
        }
        let eta = 0.3 / ((step + 1) as f64).sqrt();
        x.scaled_add(eta / gn, &g);
        let xn = x.dot(&x).sqrt();
        x /= xn;
    }
    Ok(best)
}

/// Least-squares weights: minimizes `‖T − Σ λᵢ uᵢ^{⊗3}‖_F`.
fn fit_weights(t: &SymTensor3, units: &[Array1<f64>]) -> Result<Vec<f64>> {
    let b = units.len();
    let gram = Array2::from_shape_fn((b, b), |(i, k)| units[i].dot(&units[k]).powi(3));
    let rhs = Array1::from_iter(units.iter().map(|u| cube(t, u.view())));
    let e = sym_eig(&SymMatrix::new(gram)?)?;
    let top = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut out = Array1::<f64>::zeros(b);
    for (c, &mu) in e.values.iter().enumerate() {
        if mu.abs() <= 1e-12 * top {
            continue;
        }
        let col = e.vectors.column(c);
        out.scaled_add(col.dot(&rhs) / mu, &col);
    }
    Ok(out.to_vec())
}

fn cube(t: &SymTensor3, u: ArrayView1<f64>) -> f64 {
    t.contract3(u, u, u)
}
