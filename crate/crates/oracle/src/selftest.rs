//! Oracle suites packaged for the command line and the acceptance run.
//!
//! Each suite returns one [`SelftestCase`] per check so callers can print or
//! aggregate them as they like.

use gradinv_core::inversion::decompose_projected;
use gradinv_core::model::{gradient_query, QueryBudget};
use gradinv_core::rng::{SeededRng, Stream};
use gradinv_core::{Activation, ActivationKind, Batch, ModelParams, SymTensor3};
use ndarray::{array, Array1, Array2};

use crate::{brute_force_decompose, finite_diff_grad, gaussian_poly_moment, mc_stein_check};

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestCase {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl SelftestCase {
    fn new(suite: &'static str, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            suite,
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelftestLevel {
    /// Small Monte-Carlo budgets; seconds.
    Quick,
    /// The full budgets: 10⁶ samples, 10⁷ at fourth order.
    Full,
}

impl SelftestLevel {
    fn samples(self, order: usize) -> usize {
        match (self, order) {
            (SelftestLevel::Quick, _) => 100_000,
            (SelftestLevel::Full, 4) => 10_000_000,
            (SelftestLevel::Full, _) => 1_000_000,
        }
    }
}

pub fn run_selftest(level: SelftestLevel) -> Vec<SelftestCase> {
    let mut out = polynomial_moment_cases();
    out.extend(stein_cases(level));
    out.extend(gradient_cases(20));
    out.extend(decomposition_cases(10));
    out
}

/// Closed-form Gaussian moments against the library's polynomial moments.
pub fn polynomial_moment_cases() -> Vec<SelftestCase> {
    let polys: [(&str, Vec<f64>); 3] = [
        ("poly23", vec![0.0, 0.0, 1.0, 1.0]),
        ("square", vec![0.0, 0.0, 1.0]),
        ("poly:0.5,-1,0,2,0,0.1", vec![0.5, -1.0, 0.0, 2.0, 0.0, 0.1]),
    ];
    let mut out = Vec::new();
    for (name, coeffs) in polys {
        let act = Activation::new(ActivationKind::Polynomial(coeffs.clone())).expect("valid polynomial");
        for order in 0..=4u32 {
            for v in [1.0, 0.49, 2.0] {
                let want = gaussian_poly_moment(&coeffs, order as usize, v);
                let got = act.moment(order, v);
                let (passed, detail) = match got {
                    Ok(g) => ((g - want).abs() <= 1e-12 * want.abs().max(1.0), format!("{g} vs {want}")),
                    Err(e) => (false, e.to_string()),
                };
                out.push(SelftestCase::new(
                    "poly-moment",
                    format!("{name} order {order} var {v}"),
                    passed,
                    detail,
                ));
            }
        }
    }
    out
}

/// Stein's identity per activation and order, within four standard errors.
pub fn stein_cases(level: SelftestLevel) -> Vec<SelftestCase> {
    let x = array![0.6, 0.8];
    let plan: [(Activation, &[usize]); 5] = [
        (Activation::poly23(), &[1, 2, 3]),
        (Activation::tanh(), &[1, 2, 3]),
        (Activation::sigmoid(), &[1, 2, 3]),
        (Activation::relu(), &[1, 2, 4]),
        (Activation::leaky_relu(), &[4]),
    ];
    let mut out = Vec::new();
    for (k, (act, orders)) in plan.iter().enumerate() {
        for &p in orders.iter() {
            let n = level.samples(p);
            let seed = 1000 + 10 * k as u64 + p as u64;
            let case = match mc_stein_check(act, p, x.view(), n, seed) {
                Ok(c) => SelftestCase::new(
                    "stein",
                    format!("{} p={p} n={n}", act.name()),
                    c.within(4.0),
                    format!("max |z| {:.2}, max stderr {:.2e}", c.max_z(), c.max_stderr()),
                ),
                Err(e) => SelftestCase::new("stein", format!("{} p={p}", act.name()), false, e.to_string()),
            };
            out.push(case);
        }
    }
    out
}

fn random_unit_batch(d: usize, b: usize, seed: u64) -> Batch {
    let mut rng = SeededRng::new(seed, Stream::Custom(0xfd));
    let mut x = rng.normal_matrix(d, b);
    for mut col in x.columns_mut() {
        let n = col.dot(&col).sqrt();
        col /= n;
    }
    let y = Array1::from_iter((0..b).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }));
    Batch::new(x, y).expect("finite batch")
}

fn random_network(depth: usize, m: usize, d: usize, act: &Activation, seed: u64) -> ModelParams {
    let mut rng = SeededRng::new(seed, Stream::Custom(0xfe));
    let mut layers = vec![rng.normal_matrix(m, d)];
    for _ in 2..depth {
        layers.push(rng.normal_matrix(m, m) / (m as f64).sqrt());
    }
    let a = rng.normal_vec(m) / m as f64;
    ModelParams::new(a, layers, vec![act.clone(); depth - 1], 0.7).expect("consistent shapes")
}

fn relative_error(fd: &Array2<f64>, g: &Array2<f64>) -> f64 {
    let num = (fd - g).mapv(|v| v * v).sum().sqrt();
    let den = g.mapv(|v| v * v).sum().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Response of the gradient oracle against central differences of the loss.
/// Instances cycle through activation, depth and batch size.
pub fn gradient_cases(count: usize) -> Vec<SelftestCase> {
    let acts = [
        Activation::relu(),
        Activation::leaky_relu(),
        Activation::tanh(),
        Activation::sigmoid(),
        Activation::poly23(),
    ];
    (0..count)
        .map(|k| {
            let act = &acts[k % acts.len()];
            let depth = 2 + (k / acts.len()) % 2;
            let b = 1 + k % 3;
            let seed = 77 + k as u64;
            let (d, m) = (4, 12);
            let params = random_network(depth, m, d, act, seed);
            let batch = random_unit_batch(d, b, seed);
            let name = format!("{} depth {depth} B={b} seed {seed}", act.name());
            let g = match gradient_query(&params, &batch, 0.0, seed, &mut QueryBudget::new()) {
                Ok(g) => g,
                Err(e) => return SelftestCase::new("gradient", name, false, e.to_string()),
            };
            let fd = match finite_diff_grad(&params, &batch, 1e-5) {
                Ok(fd) => fd,
                Err(e) => return SelftestCase::new("gradient", name, false, e.to_string()),
            };
            // the oracle reports half the loss gradient
            let err_a = relative_error(
                &(fd.d_a / 2.0).insert_axis(ndarray::Axis(1)),
                &g.g_a.clone().insert_axis(ndarray::Axis(1)),
            );
            let (worst, detail) = match &g.g_w {
                Some(gw) => {
                    let err_w = relative_error(&(fd.d_w1 / 2.0), gw);
                    (err_a.max(err_w), format!("rel err a {err_a:.2e}, W {err_w:.2e}"))
                }
                None => (err_a, format!("rel err a {err_a:.2e}")),
            };
            SelftestCase::new("gradient", name, worst < 1e-5, detail)
        })
        .collect()
}

fn same_up_to_sign(w1: f64, v1: &Array1<f64>, w2: f64, v2: &Array1<f64>) -> f64 {
    let direct = (w1 - w2).abs().max((v1 - v2).iter().fold(0.0f64, |m, x| m.max(x.abs())));
    let flipped = (w1 + w2).abs().max((v1 + v2).iter().fold(0.0f64, |m, x| m.max(x.abs())));
    direct.min(flipped)
}

/// The library's decomposition against the closed-form rank-two oracle on
/// noiseless two-dimensional tensors.
pub fn decomposition_cases(count: usize) -> Vec<SelftestCase> {
    (0..count)
        .map(|k| {
            let seed = 500 + k as u64;
            let mut rng = SeededRng::new(seed, Stream::Custom(0xdc));
            let mut comps = Array2::zeros((2, 2));
            for j in 0..2 {
                comps.column_mut(j).assign(&rng.unit_vector(2));
            }
            // keep the pair well separated
            let cos = comps.column(0).dot(&comps.column(1)).abs();
            if cos > 0.9 {
                let perp = array![-comps[[1, 0]], comps[[0, 0]]];
                comps.column_mut(1).assign(&perp);
            }
            let weights = [1.0 + 4.0 * rng.uniform(), -(1.0 + 4.0 * rng.uniform())];
            let name = format!("rank-2 seed {seed}");
            let t = SymTensor3::from_components(&weights, comps.view()).expect("finite");
            let oracle = match brute_force_decompose(&t, 2) {
                Ok(c) => c,
                Err(e) => return SelftestCase::new("decompose", name, false, e.to_string()),
            };
            let lib = match decompose_projected(&t, 2, 100, seed, 1e-12, 100) {
                Ok(d) => d.components,
                Err(e) => return SelftestCase::new("decompose", name, false, e.to_string()),
            };
            let mut worst: f64 = 0.0;
            for o in &oracle {
                let best = lib
                    .iter()
                    .map(|c| same_up_to_sign(o.weight, &o.vector, c.weight, &c.vector))
                    .fold(f64::INFINITY, f64::min);
                worst = worst.max(best);
            }
            SelftestCase::new("decompose", name, worst < 1e-10, format!("max deviation {worst:.2e}"))
        })
        .collect()
}
