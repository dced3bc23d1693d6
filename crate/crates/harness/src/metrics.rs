use itertools::Itertools;
use ndarray::{Array1, ArrayView1, ArrayView2};

use crate::{HarnessError, Result};

/// Largest batch for which every column matching is tried.
pub const MAX_MATCH: usize = 8;

/// RMS reconstruction error `√((1/B) Σᵢ ‖xᵢ − x̂_{π(i)}‖²)` minimized over
/// permutations `π`, together with the minimizing permutation. Signs are
/// not flipped.
pub fn recon_match(x: ArrayView2<f64>, x_hat: ArrayView2<f64>) -> Result<(f64, Vec<usize>)> {
    if x.dim() != x_hat.dim() {
        return Err(HarnessError::Config(format!(
            "shape mismatch: {:?} vs {:?}",
            x.dim(),
            x_hat.dim()
        )));
    }
    let b = x.ncols();
    if b > MAX_MATCH {
        return Err(HarnessError::Unsupported(format!(
            "exhaustive matching of {b} columns (limit {MAX_MATCH})"
        )));
    }
    let cost: Vec<Vec<f64>> = (0..b)
        .map(|i| {
            (0..b)
                .map(|j| (&x.column(i) - &x_hat.column(j)).mapv(|v| v * v).sum())
                .collect()
        })
        .collect();
    let (best, perm) = (0..b)
        .permutations(b)
        .map(|p| (p.iter().enumerate().map(|(i, &j)| cost[i][j]).sum::<f64>(), p))
        .min_by(|a, c| a.0.total_cmp(&c.0))
        .unwrap_or((0.0, Vec::new()));
    Ok(((best / b.max(1) as f64).sqrt(), perm))
}

pub fn recon_error(x: ArrayView2<f64>, x_hat: ArrayView2<f64>) -> Result<f64> {
    recon_match(x, x_hat).map(|(e, _)| e)
}

/// Fraction of samples whose matched predicted label has the right sign.
pub fn label_accuracy(y: ArrayView1<f64>, y_hat: ArrayView1<f64>, perm: &[usize]) -> f64 {
    let hits = perm
        .iter()
        .enumerate()
        .filter(|(i, &j)| y_hat[j].signum() == y[*i].signum())
        .count();
    hits as f64 / perm.len().max(1) as f64
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Index of the pool column with the largest cosine similarity to `v`.
pub fn nearest_by_cosine(pool: ArrayView2<f64>, v: ArrayView1<f64>) -> usize {
    let nv = v.dot(&v).sqrt();
    let cos: Array1<f64> = pool
        .columns()
        .into_iter()
        .map(|c| c.dot(&v) / (c.dot(&c).sqrt() * nv))
        .collect();
    cos.iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0)
}
