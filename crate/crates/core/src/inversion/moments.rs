//! Gradient-weighted Hermite moment estimators.

use ndarray::{Array1, Array2, Array3, ArrayView1, ArrayView2, Axis};

use super::Variant;
use crate::error::{check_dim, Error, Result};
use crate::model::GradientResponse;
use crate::tensor::{LinearOperator, SymTensor3};

/// Everything the pipeline estimates before decomposition.
pub struct MomentEstimates<'a> {
    pub p_op: Box<dyn LinearOperator + 'a>,
    /// Orthonormal `d x B` basis of the estimated span.
    pub v: Array2<f64>,
    pub t_proj: SymTensor3,
    pub variant: Variant,
    /// Unit probe direction in `R^d` (contracted variants only).
    pub probe_a: Option<Array1<f64>>,
}

/// `v ↦ (1/m) Σⱼ gⱼ ((wⱼ·v) wⱼ − v)`.
pub struct StandardP<'a> {
    w: ArrayView2<'a, f64>,
    g: ArrayView1<'a, f64>,
    g_sum: f64,
}

impl<'a> StandardP<'a> {
    pub fn new(w: ArrayView2<'a, f64>, g: ArrayView1<'a, f64>) -> Result<Self> {
        check_dim("gradient length", w.nrows(), g.len())?;
        Ok(Self { w, g, g_sum: g.sum() })
    }
}

impl LinearOperator for StandardP<'_> {
    fn dim(&self) -> usize {
        self.w.ncols()
    }

    fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.apply_block(v.insert_axis(Axis(1))).column(0).to_owned()
    }

    fn apply_block(&self, block: ArrayView2<f64>) -> Array2<f64> {
        let m = self.w.nrows() as f64;
        let mut proj = self.w.dot(&block);
        proj *= &self.g.insert_axis(Axis(1));
        let mut out = self.w.t().dot(&proj);
        out.scaled_add(-self.g_sum, &block);
        out / m
    }
}

/// `v ↦ (1/m) Σⱼ gⱼ H₃(wⱼ)(v, ·, a)`, i.e.
/// `(wⱼ·v)(wⱼ·a) wⱼ − (wⱼ·v) a − (wⱼ·a) v − (a·v) wⱼ` per unit.
pub struct ThirdOrderP<'a> {
    w: ArrayView2<'a, f64>,
    g: ArrayView1<'a, f64>,
    a: Array1<f64>,
    // gⱼ (wⱼ·a)
    g_wa: Array1<f64>,
    g_wa_sum: f64,
    wt_g: Array1<f64>,
}

impl<'a> ThirdOrderP<'a> {
    pub fn new(w: ArrayView2<'a, f64>, g: ArrayView1<'a, f64>, a: ArrayView1<f64>) -> Result<Self> {
        check_dim("gradient length", w.nrows(), g.len())?;
        check_dim("probe dimension", w.ncols(), a.len())?;
        let g_wa = w.dot(&a) * g;
        Ok(Self {
            w,
            g,
            a: a.to_owned(),
            g_wa_sum: g_wa.sum(),
            g_wa,
            wt_g: w.t().dot(&g),
        })
    }
}

impl LinearOperator for ThirdOrderP<'_> {
    fn dim(&self) -> usize {
        self.w.ncols()
    }

    fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.apply_block(v.insert_axis(Axis(1))).column(0).to_owned()
    }

    fn apply_block(&self, block: ArrayView2<f64>) -> Array2<f64> {
        let m = self.w.nrows() as f64;
        let wv = self.w.dot(&block);
        let g_wv = self.g.dot(&wv);
        let a_v = self.a.dot(&block);
        let weighted = &wv * &self.g_wa.view().insert_axis(Axis(1));
        let mut out = self.w.t().dot(&weighted);
        for (c, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
            col.scaled_add(-g_wv[c], &self.a);
            col.scaled_add(-self.g_wa_sum, &block.column(c));
            col.scaled_add(-a_v[c], &self.wt_g);
        }
        out / m
    }
}

/// Gram operator `v ↦ (1/m) Σⱼ (ĝⱼ/aⱼ)(ĝⱼ/aⱼ)·v` of the first-layer
/// gradient rows. Each row is a combination of the samples, so the range
/// is exactly their span in the noiseless case.
pub struct FirstLayerGram<'a> {
    g_w: ArrayView2<'a, f64>,
    inv_a2: Array1<f64>,
}

impl<'a> FirstLayerGram<'a> {
    pub fn new(g_w: ArrayView2<'a, f64>, out_weights: ArrayView1<f64>) -> Result<Self> {
        check_dim("first-layer gradient rows", out_weights.len(), g_w.nrows())?;
        if out_weights.iter().any(|&a| a == 0.0) {
            return Err(Error::Degenerate("zero output weight".into()));
        }
        Ok(Self {
            g_w,
            inv_a2: out_weights.mapv(|a| 1.0 / (a * a)),
        })
    }
}

impl LinearOperator for FirstLayerGram<'_> {
    fn dim(&self) -> usize {
        self.g_w.ncols()
    }

    fn apply(&self, v: ArrayView1<f64>) -> Array1<f64> {
        self.apply_block(v.insert_axis(Axis(1))).column(0).to_owned()
    }

    fn apply_block(&self, block: ArrayView2<f64>) -> Array2<f64> {
        let m = self.g_w.nrows() as f64;
        let mut proj = self.g_w.dot(&block);
        proj *= &self.inv_a2.view().insert_axis(Axis(1));
        self.g_w.t().dot(&proj) / m
    }
}

/// `(1/m) Σⱼ gⱼ wⱼ`, the first-order Stein moment `Σᵢ rᵢ E[σ′] xᵢ`.
pub fn first_moment(g_a: ArrayView1<f64>, w: ArrayView2<f64>) -> Result<Array1<f64>> {
    check_dim("gradient length", w.nrows(), g_a.len())?;
    Ok(w.t().dot(&g_a) / w.nrows() as f64)
}

fn require_first_layer(g: &GradientResponse) -> Result<ArrayView2<'_, f64>> {
    g.g_w
        .as_ref()
        .map(|x| x.view())
        .ok_or_else(|| Error::Unsupported("first-layer gradient not available for this victim".into()))
}

/// Second-order moment operator for `variant`.
///
/// `out_weights` are the output-layer weights `aⱼ`; only the first-layer
/// variant uses them.
pub fn build_p_operator<'a>(
    g: &'a GradientResponse,
    w: ArrayView2<'a, f64>,
    out_weights: ArrayView1<f64>,
    variant: Variant,
    probe_a: Option<ArrayView1<f64>>,
) -> Result<Box<dyn LinearOperator + 'a>> {
    check_dim("gradient length", w.nrows(), g.g_a.len())?;
    match variant {
        Variant::Standard | Variant::ReluFourthOrder => Ok(Box::new(StandardP::new(w, g.g_a.view())?)),
        Variant::TanhThirdOrder => {
            let a = probe_a.ok_or_else(|| Error::contract("contracted operator needs a probe direction"))?;
            check_unit(a)?;
            Ok(Box::new(ThirdOrderP::new(w, g.g_a.view(), a)?))
        }
        Variant::FirstLayerAlt => Ok(Box::new(FirstLayerGram::new(require_first_layer(g)?, out_weights)?)),
    }
}

fn check_unit(a: ArrayView1<f64>) -> Result<()> {
    let n = a.dot(&a).sqrt();
    if (n - 1.0).abs() > 1e-12 {
        return Err(Error::contract(format!("probe direction must be a unit vector, norm {n}")));
    }
    Ok(())
}

fn check_orthonormal(v: ArrayView2<f64>) -> Result<()> {
    let gram = v.t().dot(&v);
    for ((i, j), &x) in gram.indexed_iter() {
        let want = if i == j { 1.0 } else { 0.0 };
        if (x - want).abs() > 1e-10 {
            return Err(Error::contract("subspace basis is not orthonormal"));
        }
    }
    Ok(())
}

/// Adds `c·(x_i δ_jk + x_j δ_ik + x_k δ_ij)` to `t`.
fn add_sym_identity(t: &mut Array3<f64>, x: &Array1<f64>, c: f64) {
    let b = x.len();
    for i in 0..b {
        for j in 0..b {
            t[[i, j, j]] += c * x[i];
            t[[j, i, j]] += c * x[i];
            t[[j, j, i]] += c * x[i];
        }
    }
}

/// Projected tensor `(1/m) Σⱼ gⱼ Hₖ(Vᵀwⱼ)` (contracted along `Vᵀa` for the
/// fourth-order variant), in `B` dimensions.
pub fn estimate_projected_tensor(
    g: &GradientResponse,
    w: ArrayView2<f64>,
    v: ArrayView2<f64>,
    variant: Variant,
    probe_a: Option<ArrayView1<f64>>,
) -> Result<SymTensor3> {
    check_dim("gradient length", w.nrows(), g.g_a.len())?;
    check_dim("basis rows", w.ncols(), v.nrows())?;
    check_orthonormal(v)?;
    let m = w.nrows() as f64;
    let b = v.ncols();
    let q = w.dot(&v);
    let ga = &g.g_a;
    let mut t = Array3::<f64>::zeros((b, b, b));
    match variant {
        Variant::Standard | Variant::TanhThirdOrder => {
            let mut s1 = Array1::<f64>::zeros(b);
            for (qj, &gj) in q.axis_iter(Axis(0)).zip(ga.iter()) {
                accumulate_cube(&mut t, qj, gj);
                s1.scaled_add(gj, &qj);
            }
            add_sym_identity(&mut t, &s1, -1.0);
        }
        Variant::ReluFourthOrder => {
            let a = probe_a.ok_or_else(|| Error::contract("fourth-order tensor needs a probe direction"))?;
            check_unit(a)?;
            let ab = v.t().dot(&a);
            let nb = ab.dot(&ab).sqrt();
            if nb <= 1e-12 {
                return Err(Error::Degenerate("probe direction is orthogonal to the subspace".into()));
            }
            let ab = ab / nb;
            let mut s2 = Array2::<f64>::zeros((b, b));
            let mut s1 = Array1::<f64>::zeros(b);
            let s0 = ga.sum();
            for (qj, &gj) in q.axis_iter(Axis(0)).zip(ga.iter()) {
                let tj = qj.dot(&ab);
                accumulate_cube(&mut t, qj, gj * tj);
                for i in 0..b {
                    for k in 0..b {
                        s2[[i, k]] += gj * qj[i] * qj[k];
                    }
                }
                s1.scaled_add(gj * tj, &qj);
            }
            for i in 0..b {
                for j in 0..b {
                    for k in 0..b {
                        t[[i, j, k]] -= s2[[i, j]] * ab[k] + s2[[i, k]] * ab[j] + s2[[j, k]] * ab[i];
                    }
                }
            }
            add_sym_identity(&mut t, &s1, -1.0);
            add_sym_identity(&mut t, &ab, s0);
        }
        Variant::FirstLayerAlt => {
            return Err(Error::contract(
                "the first-layer tensor is built by estimate_projected_tensor_alt",
            ))
        }
    }
    t /= m;
    SymTensor3::new(t)
}

fn accumulate_cube(t: &mut Array3<f64>, q: ArrayView1<f64>, c: f64) {
    let b = q.len();
    for i in 0..b {
        let ci = c * q[i];
        for j in 0..b {
            let cij = ci * q[j];
            for k in 0..b {
                t[[i, j, k]] += cij * q[k];
            }
        }
    }
}

/// Projected tensor from the first-layer gradient:
/// `T₁ = (1/m) Σⱼ (Vᵀĝⱼ/aⱼ) ⊗ H₂(Vᵀwⱼ)`, symmetrized over index
/// permutations (`T₁` is already symmetric in its last two indices, so
/// this is the cyclic average).
pub fn estimate_projected_tensor_alt(
    g: &GradientResponse,
    w: ArrayView2<f64>,
    out_weights: ArrayView1<f64>,
    v: ArrayView2<f64>,
) -> Result<SymTensor3> {
    let g_w = require_first_layer(g)?;
    check_dim("first-layer gradient shape", w.nrows(), g_w.nrows())?;
    check_dim("first-layer gradient columns", w.ncols(), g_w.ncols())?;
    check_dim("output weights", w.nrows(), out_weights.len())?;
    check_dim("basis rows", w.ncols(), v.nrows())?;
    check_orthonormal(v)?;
    let m = w.nrows() as f64;
    let b = v.ncols();
    let q = w.dot(&v);
    let p = g_w.dot(&v);
    let mut t = Array3::<f64>::zeros((b, b, b));
    let mut p_sum = Array1::<f64>::zeros(b);
    for ((pj, qj), &aj) in p.axis_iter(Axis(0)).zip(q.axis_iter(Axis(0))).zip(out_weights.iter()) {
        if aj == 0.0 {
            return Err(Error::Degenerate("zero output weight".into()));
        }
        for i in 0..b {
            let pi = pj[i] / aj;
            for j in 0..b {
                for k in 0..b {
                    t[[i, j, k]] += pi * qj[j] * qj[k];
                }
            }
            p_sum[i] += pi;
        }
    }
    for i in 0..b {
        for j in 0..b {
            t[[i, j, j]] -= p_sum[i];
        }
    }
    t /= m;
    SymTensor3::new(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{SeededRng, Stream};
    use crate::tensor::{hermite2_apply, hermite3, hermite4_contract, materialize, orthonormalize, symmetry_defect};
    use ndarray::array;

    fn response(g_a: Array1<f64>, g_w: Option<Array2<f64>>) -> GradientResponse {
        GradientResponse {
            g_a,
            g_w,
            noise_sigma: 0.0,
            seed: 0,
        }
    }

    fn fixture(m: usize, d: usize, b: usize) -> (Array2<f64>, GradientResponse, Array2<f64>, Array1<f64>) {
        let mut rng = SeededRng::new(21, Stream::Custom(70));
        let w = rng.normal_matrix(m, d);
        let g = rng.normal_vec(m);
        let gw = rng.normal_matrix(m, d);
        let v = orthonormalize(rng.normal_matrix(d, b).view()).unwrap();
        let a = rng.unit_vector(d);
        (w, response(g, Some(gw)), v, a)
    }

    #[test]
    fn standard_p_matches_direct_sum() {
        let (w, g, _, _) = fixture(30, 4, 2);
        let op = StandardP::new(w.view(), g.g_a.view()).unwrap();
        let v = array![0.3, -1.0, 0.5, 2.0];
        let mut want = Array1::zeros(4);
        for j in 0..30 {
            want.scaled_add(g.g_a[j] / 30.0, &hermite2_apply(w.row(j), v.view()).unwrap());
        }
        let got = op.apply(v.view());
        for (x, y) in got.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(symmetry_defect(&op, v.view(), array![1.0, 0.0, -2.0, 0.1].view()) < 1e-12);
    }

    #[test]
    fn third_order_p_matches_dense_contraction() {
        let (w, g, _, a) = fixture(25, 3, 2);
        let op = ThirdOrderP::new(w.view(), g.g_a.view(), a.view()).unwrap();
        let dense = materialize(&op);
        let mut want = Array2::<f64>::zeros((3, 3));
        for j in 0..25 {
            let h = hermite3(w.row(j)).unwrap();
            want = want + h.slice(a.view()).unwrap().entries() * (g.g_a[j] / 25.0);
        }
        for (x, y) in dense.iter().zip(want.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(symmetry_defect(&op, array![1.0, 2.0, 3.0].view(), array![0.0, -1.0, 0.5].view()) < 1e-12);
    }

    #[test]
    fn zero_gradient_gives_zero_estimates() {
        let (w, _, v, a) = fixture(10, 4, 2);
        let g = response(Array1::zeros(10), Some(Array2::zeros((10, 4))));
        let p = build_p_operator(&g, w.view(), Array1::from_elem(10, 0.1).view(), Variant::Standard, None).unwrap();
        assert!(p.apply(a.view()).iter().all(|&x| x == 0.0));
        let t = estimate_projected_tensor(&g, w.view(), v.view(), Variant::Standard, None).unwrap();
        assert!(t.entries().iter().all(|&x| x == 0.0));
        let t = estimate_projected_tensor_alt(&g, w.view(), Array1::from_elem(10, 0.1).view(), v.view()).unwrap();
        assert!(t.entries().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn projected_tensor_matches_per_unit_hermite3() {
        let (w, g, v, _) = fixture(40, 5, 3);
        let got = estimate_projected_tensor(&g, w.view(), v.view(), Variant::Standard, None).unwrap();
        let mut want = SymTensor3::zeros(3);
        for j in 0..40 {
            let h = hermite3(v.t().dot(&w.row(j)).view()).unwrap();
            want = want.add(&h.scaled(g.g_a[j] / 40.0)).unwrap();
        }
        for (x, y) in got.entries().iter().zip(want.entries().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn fourth_order_matches_per_unit_contraction() {
        let (w, g, v, a) = fixture(40, 5, 2);
        let got = estimate_projected_tensor(&g, w.view(), v.view(), Variant::ReluFourthOrder, Some(a.view())).unwrap();
        let ab = v.t().dot(&a);
        let ab = &ab / ab.dot(&ab).sqrt();
        let mut want = SymTensor3::zeros(2);
        for j in 0..40 {
            let h = hermite4_contract(v.t().dot(&w.row(j)).view(), ab.view()).unwrap();
            want = want.add(&h.scaled(g.g_a[j] / 40.0)).unwrap();
        }
        for (x, y) in got.entries().iter().zip(want.entries().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(estimate_projected_tensor(&g, w.view(), v.view(), Variant::ReluFourthOrder, None).is_err());
    }

    #[test]
    fn alt_tensor_matches_direct_sum() {
        let (w, g, v, _) = fixture(20, 4, 2);
        let aw = Array1::from_elem(20, 0.05);
        let got = estimate_projected_tensor_alt(&g, w.view(), aw.view(), v.view()).unwrap();
        let gw = g.g_w.as_ref().unwrap();
        let mut raw = Array3::<f64>::zeros((2, 2, 2));
        for j in 0..20 {
            let p = v.t().dot(&gw.row(j)) / 0.05;
            let q = v.t().dot(&w.row(j));
            for i in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let h2 = q[k] * q[l] - if k == l { 1.0 } else { 0.0 };
                        raw[[i, k, l]] += p[i] * h2 / 20.0;
                    }
                }
            }
        }
        // cyclic average
        let mut cyc = Array3::<f64>::zeros((2, 2, 2));
        for ((i, j, k), x) in cyc.indexed_iter_mut() {
            *x = (raw[[i, j, k]] + raw[[j, k, i]] + raw[[k, i, j]]) / 3.0;
        }
        for (x, y) in got.entries().iter().zip(cyc.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(estimate_projected_tensor_alt(&response(g.g_a.clone(), None), w.view(), aw.view(), v.view()).is_err());
    }

    #[test]
    fn gram_operator_range_is_row_span() {
        let mut rng = SeededRng::new(2, Stream::Custom(71));
        let x = orthonormalize(rng.normal_matrix(6, 2).view()).unwrap();
        let coef = rng.normal_matrix(15, 2);
        let gw = coef.dot(&x.t());
        let g = response(Array1::zeros(15), Some(gw));
        let w = rng.normal_matrix(15, 6);
        let op = build_p_operator(&g, w.view(), Array1::from_elem(15, 0.3).view(), Variant::FirstLayerAlt, None).unwrap();
        let out = op.apply(rng.normal_vec(6).view());
        let resid = &out - &x.dot(&x.t().dot(&out));
        assert!(resid.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn contracted_variant_requires_probe() {
        let (w, g, _, _) = fixture(10, 3, 2);
        let ones = Array1::from_elem(10, 0.1);
        assert!(build_p_operator(&g, w.view(), ones.view(), Variant::TanhThirdOrder, None).is_err());
        let not_unit = array![1.0, 1.0, 0.0];
        assert!(build_p_operator(&g, w.view(), ones.view(), Variant::TanhThirdOrder, Some(not_unit.view())).is_err());
    }
}
