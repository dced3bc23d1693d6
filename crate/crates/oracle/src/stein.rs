use gradinv_core::rng::{SeededRng, Stream};
use gradinv_core::Activation;
use ndarray::{ArrayD, ArrayView1, IxDyn};

use crate::{OracleError, Result};

/// Monomial term of a Hermite entry: `coef · Π w[idx]`.
#[derive(Debug, Clone)]
struct Term {
    coef: f64,
    vars: Vec<usize>,
}

/// Expands `H(w)_{i₁…iₚ}` over all partial pairings of the index list: each
/// pair `(a, b)` contributes `−δ_{iₐ i_b}` and every unpaired index a factor
/// `w_i`.
fn pairing_terms(idx: &[usize]) -> Vec<Term> {
    fn go(rest: &[usize], coef: f64, vars: &mut Vec<usize>, out: &mut Vec<Term>) {
        let Some((&first, tail)) = rest.split_first() else {
            out.push(Term {
                coef,
                vars: vars.clone(),
            });
            return;
        };
        vars.push(first);
        go(tail, coef, vars, out);
        vars.pop();
        for k in 0..tail.len() {
            if tail[k] == first {
                let mut reduced = tail.to_vec();
                reduced.remove(k);
                go(&reduced, -coef, vars, out);
            }
        }
    }
    let mut out = Vec::new();
    go(idx, 1.0, &mut Vec::new(), &mut out);
    out
}

fn multi_indices(d: usize, p: usize) -> Vec<Vec<usize>> {
    let mut all = vec![Vec::new()];
    for _ in 0..p {
        all = all
            .into_iter()
            .flat_map(|prefix| {
                (0..d).map(move |i| {
                    let mut v = prefix.clone();
                    v.push(i);
                    v
                })
            })
            .collect();
    }
    all
}

fn eval_terms(terms: &[Term], w: &[f64]) -> f64 {
    terms
        .iter()
        .map(|t| t.coef * t.vars.iter().map(|&i| w[i]).product::<f64>())
        .sum()
}

/// Dense `H_p(w)` with `d^p` entries, straight from the pairing definition.
pub fn hermite_dense(w: ArrayView1<f64>, p: usize) -> ArrayD<f64> {
    let d = w.len();
    let wv = w.to_vec();
    let mut out = ArrayD::zeros(IxDyn(&vec![d; p]));
    for idx in multi_indices(d, p) {
        out[IxDyn(&idx)] = eval_terms(&pairing_terms(&idx), &wv);
    }
    out
}

/// Monte-Carlo estimate of both sides of Stein's identity
/// `E[σ(w·x) H_p(w)] = E σ⁽ᵖ⁾(Z) · x^{⊗p}`, `Z ~ N(0, ‖x‖²)`.
#[derive(Debug, Clone)]
pub struct SteinCheck {
    pub lhs: ArrayD<f64>,
    pub rhs: ArrayD<f64>,
    /// Per-entry standard error of `lhs`.
    pub stderr: ArrayD<f64>,
}

impl SteinCheck {
    /// Largest per-entry standard error.
    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().cloned().fold(0.0, f64::max)
    }

    /// Largest `|lhs − rhs| / stderr` over all entries. Entries with zero
    /// standard error must match exactly (up to rounding).
    pub fn max_z(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for ((l, r), s) in self.lhs.iter().zip(&self.rhs).zip(&self.stderr) {
            let diff = (l - r).abs();
            let z = if *s > 0.0 {
                diff / s
            } else if diff < 1e-12 {
                0.0
            } else {
                f64::INFINITY
            };
            worst = worst.max(z);
        }
        worst
    }

    pub fn within(&self, k: f64) -> bool {
        self.max_z() < k
    }
}

pub fn mc_stein_check(act: &Activation, p: usize, x: ArrayView1<f64>, n: usize, seed: u64) -> Result<SteinCheck> {
    if !(1..=4).contains(&p) {
        return Err(OracleError::Invalid(format!("Hermite order {p} outside 1..=4")));
    }
    if n < 2 {
        return Err(OracleError::Invalid("need at least two samples".into()));
    }
    let d = x.len();
    let norm2 = x.dot(&x);
    if d == 0 || !(norm2 > 0.0) {
        return Err(OracleError::Invalid("x must be a nonzero vector".into()));
    }
    let indices = multi_indices(d, p);
    let terms: Vec<Vec<Term>> = indices.iter().map(|idx| pairing_terms(idx)).collect();
    let mut sum = vec![0.0; indices.len()];
    let mut sum_sq = vec![0.0; indices.len()];
    let mut rng = SeededRng::new(seed, Stream::Custom(0x57e1));
    let mut w = vec![0.0; d];
    for _ in 0..n {
        for wi in w.iter_mut() {
            *wi = rng.normal();
        }
        let z: f64 = w.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
        let s = act.eval(z);
        for (k, t) in terms.iter().enumerate() {
            let v = s * eval_terms(t, &w);
            sum[k] += v;
            sum_sq[k] += v * v;
        }
    }
    let shape = IxDyn(&vec![d; p]);
    let mut lhs = ArrayD::zeros(shape.clone());
    let mut stderr = ArrayD::zeros(shape.clone());
    let mut rhs = ArrayD::zeros(shape);
    let nf = n as f64;
    let moment = act.moment(p as u32, norm2)?;
    for (k, idx) in indices.iter().enumerate() {
        let mean = sum[k] / nf;
        let var = ((sum_sq[k] - nf * mean * mean) / (nf - 1.0)).max(0.0);
        lhs[IxDyn(idx)] = mean;
        stderr[IxDyn(idx)] = (var / nf).sqrt();
        rhs[IxDyn(idx)] = moment * idx.iter().map(|&i| x[i]).product::<f64>();
    }
    Ok(SteinCheck { lhs, rhs, stderr })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn pairing_definition_matches_low_orders() {
        let w = array![0.3, -1.2, 2.0];
        let h1 = hermite_dense(w.view(), 1);
        assert_eq!(h1.as_slice().unwrap(), w.as_slice().unwrap());
        let h2 = hermite_dense(w.view(), 2);
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                assert!((h2[[i, j]] - (w[i] * w[j] - delta)).abs() < 1e-15);
            }
        }
        // univariate He₄(t) = t⁴ − 6t² + 3
        let t = 1.7;
        let h4 = hermite_dense(array![t].view(), 4);
        assert!((h4[[0, 0, 0, 0]] - (t.powi(4) - 6.0 * t * t + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn poly23_second_order_small_sample() {
        let c = mc_stein_check(&Activation::poly23(), 2, array![1.0, 0.0].view(), 200_000, 3).unwrap();
        assert!((c.rhs[[0, 0]] - 2.0).abs() < 1e-12);
        assert!(c.within(4.0), "z = {}", c.max_z());
    }

    #[test]
    fn rejects_bad_order() {
        assert!(mc_stein_check(&Activation::relu(), 5, array![1.0].view(), 100, 0).is_err());
    }
}
