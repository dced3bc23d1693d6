use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::{
    build_p_operator, decompose_projected, estimate_projected_tensor, estimate_projected_tensor_alt,
    estimate_subspace, first_moment, recover_signs_labels, AttackConfig, Diagnostics, MomentEstimates,
    ReconstructionResult, RecoveryContext, SubspaceEstimate, SubspaceSource, Variant,
};
use crate::activation::{Activation, ActivationKind};
use crate::error::{check_dim, Error, Result};
use crate::model::{GradientResponse, ModelParams};
use crate::rng::{SeededRng, Stream};

/// Unit probe direction: the normalized first-order moment, which makes
/// every contracted weight `rᵢ (xᵢ·a)` share a sign for well-spread data.
/// Falls back to a seeded random direction if the moment vanishes.
fn probe_direction(m1: &Array1<f64>, seed: u64) -> Array1<f64> {
    let n = m1.dot(m1).sqrt();
    if n > 0.0 && n.is_finite() {
        m1 / n
    } else {
        SeededRng::new(seed, Stream::Probe).unit_vector(m1.len())
    }
}

fn resolve_variant(act: &Activation, config: &AttackConfig) -> Result<Variant> {
    let variant = match config.variant {
        Some(v) => v,
        None => Variant::auto(act)?,
    };
    if variant == Variant::FirstLayerAlt && act.k3() != Some(3) {
        return Err(Error::Unsupported(format!(
            "the first-layer estimator needs a non-vanishing third moment; {} has none",
            act.name()
        )));
    }
    Ok(variant)
}

/// Moment operator, subspace and projected tensor for one gradient.
pub fn estimate_moments<'a>(
    g: &'a GradientResponse,
    w: ArrayView2<'a, f64>,
    out_weights: ArrayView1<'a, f64>,
    act: &Activation,
    config: &AttackConfig,
) -> Result<(MomentEstimates<'a>, SubspaceEstimate)> {
    let variant = resolve_variant(act, config)?;
    let p_variant = match (variant, config.subspace) {
        (Variant::FirstLayerAlt, SubspaceSource::Moment) => Variant::auto(act)?,
        _ => variant,
    };
    let m1 = first_moment(g.g_a.view(), w)?;
    let probe = probe_direction(&m1, config.seed);
    let needs_probe = p_variant.contracts_p() || variant.fourth_order();
    let p_op = build_p_operator(g, w, out_weights, p_variant, p_variant.contracts_p().then(|| probe.view()))
        .map_err(|e| e.at_stage("moments"))?;
    let sub = estimate_subspace(
        p_op.as_ref(),
        config.batch_size,
        config.power_max_iters,
        config.power_tol,
        config.seed,
    )
    .map_err(|e| e.at_stage("subspace"))?;
    let t_proj = match variant {
        Variant::FirstLayerAlt => estimate_projected_tensor_alt(g, w, out_weights, sub.v.view()),
        _ => estimate_projected_tensor(g, w, sub.v.view(), variant, needs_probe.then(|| probe.view())),
    }
    .map_err(|e| e.at_stage("tensor"))?;
    Ok((
        MomentEstimates {
            p_op,
            v: sub.v.clone(),
            t_proj,
            variant,
            probe_a: needs_probe.then_some(probe),
        },
        sub,
    ))
}

fn run_effective_two_layer(
    w: ArrayView2<f64>,
    out_weights: ArrayView1<f64>,
    act: &Activation,
    g: &GradientResponse,
    config: &AttackConfig,
    input_scale: f64,
) -> Result<ReconstructionResult> {
    check_dim("gradient length", w.nrows(), g.g_a.len())?;
    if config.batch_size == 0 || config.batch_size > w.ncols() {
        return Err(Error::Contract(format!(
            "batch size {} outside 1..={}",
            config.batch_size,
            w.ncols()
        )));
    }
    let (est, sub) = estimate_moments(g, w, out_weights, act, config)?;
    let mut diagnostics = Diagnostics {
        variant: Some(est.variant),
        power_iters: sub.iterations,
        subspace_residual: sub.residual,
        workers: 1,
        ..Diagnostics::default()
    };
    if sub.eigengap_warning {
        diagnostics.warnings.push(format!(
            "power iteration stalled at projector change {:.3e} after {} iterations (small eigengap)",
            sub.residual, sub.iterations
        ));
    }

    let decomposition = decompose_projected(
        &est.t_proj,
        config.batch_size,
        config.projections,
        config.seed,
        config.joint_tol,
        config.joint_max_sweeps,
    )
    .map_err(|e| e.at_stage("decompose"))?;
    diagnostics.joint_diag_residual = decomposition.joint_residual;
    diagnostics.joint_diag_sweeps = decomposition.sweeps;
    diagnostics.warnings.extend(decomposition.warnings.iter().cloned());

    let mut ctx = RecoveryContext::new(act, config.bias, config.mode);
    ctx.input_scale = input_scale;
    if est.variant.fourth_order() {
        let probe = est.probe_a.as_ref().expect("fourth-order variant carries a probe");
        let pb = est.v.t().dot(probe);
        let n = pb.dot(&pb).sqrt();
        ctx.probe_b = Some(pb / n);
        ctx.sign_hint = Some(est.v.t().dot(&first_moment(g.g_a.view(), w)?));
    }

    let merge = |r: &mut ReconstructionResult| {
        let snap = std::mem::take(&mut r.diagnostics);
        r.diagnostics = Diagnostics {
            snapping_residuals: snap.snapping_residuals,
            snapping_tolerance: snap.snapping_tolerance,
            ..diagnostics.clone()
        };
    };
    match recover_signs_labels(&decomposition, est.v.view(), &ctx) {
        Ok(mut r) => {
            merge(&mut r);
            Ok(r)
        }
        Err(Error::Ambiguous {
            component,
            residual,
            gap,
            mut partial,
        }) => {
            merge(&mut partial);
            Err(Error::Ambiguous {
                component,
                residual,
                gap,
                partial,
            }
            .at_stage("recover"))
        }
        Err(e) => Err(e.at_stage("recover")),
    }
}

/// Full attack on a two-layer victim from its single gradient response.
pub fn run_attack_two_layer(
    params: &ModelParams,
    g: &GradientResponse,
    config: &AttackConfig,
) -> Result<ReconstructionResult> {
    if params.depth() != 2 {
        return Err(Error::Contract(format!(
            "two-layer attack on a depth-{} network",
            params.depth()
        )));
    }
    run_effective_two_layer(
        params.first_layer().view(),
        params.a().view(),
        params.output_activation(),
        g,
        config,
        1.0,
    )
}

/// The two-layer problem hidden inside a designed deep network.
#[derive(Debug, Clone)]
pub struct DeepDesign {
    /// Effective first-layer weights `zⱼ` (`m x d`).
    pub z: Array2<f64>,
    /// `wⱼ·h(x) = scale · zⱼ·x`: `1 + α^{l−2}` for a leaky slope `α`.
    pub scale: f64,
}

impl DeepDesign {
    /// Checks the designed structure and reads off `z` and the scale.
    pub fn extract(params: &ModelParams) -> Result<Self> {
        let layers = params.layers();
        if layers.len() < 2 {
            return Err(Error::InvalidDesign("designed networks have depth >= 3".into()));
        }
        let first = &layers[0];
        let (m, d) = first.dim();
        if m < 2 * d {
            return Err(Error::InvalidDesign(format!("width {m} below 2 x {d}")));
        }
        let expect_first = |i: usize, k: usize| -> f64 {
            if i < d && i == k {
                1.0
            } else if i >= d && i < 2 * d && i - d == k {
                -1.0
            } else {
                0.0
            }
        };
        if first.indexed_iter().any(|((i, k), &x)| x != expect_first(i, k)) {
            return Err(Error::InvalidDesign("first layer is not [I; -I; 0]".into()));
        }
        for w in &layers[1..layers.len() - 1] {
            let ok = w
                .indexed_iter()
                .all(|((i, k), &x)| x == if i == k && i < 2 * d { 1.0 } else { 0.0 });
            if !ok {
                return Err(Error::InvalidDesign("transport layer is not [I, 0]".into()));
            }
        }
        let last = &layers[layers.len() - 1];
        let z = last.slice(s![.., ..d]).to_owned();
        let mirrored = last.slice(s![.., d..2 * d]);
        let rest = last.slice(s![.., 2 * d..]);
        if mirrored.iter().zip(z.iter()).any(|(a, b)| *a != -*b) || rest.iter().any(|&x| x != 0.0) {
            return Err(Error::InvalidDesign("last hidden layer is not [z, -z, 0]".into()));
        }

        let mut leak_product = 1.0;
        for act in &params.activations()[..layers.len() - 1] {
            match act.kind() {
                ActivationKind::Relu => leak_product = 0.0,
                ActivationKind::LeakyRelu { alpha } => leak_product *= alpha,
                _ => {
                    return Err(Error::Unsupported(format!(
                        "transport through {} layers needs the unknown input norm",
                        act.name()
                    )))
                }
            }
        }
        Ok(Self {
            z,
            scale: 1.0 + leak_product,
        })
    }
}

/// Attack on a designed deep network: runs the two-layer pipeline on the
/// induced problem and undoes the transport scale.
pub fn run_attack_deep(params: &ModelParams, g: &GradientResponse, config: &AttackConfig) -> Result<ReconstructionResult> {
    let design = DeepDesign::extract(params)?;
    let mut result = run_effective_two_layer(
        design.z.view(),
        params.a().view(),
        params.output_activation(),
        g,
        config,
        design.scale,
    );
    let rescale = |r: &mut ReconstructionResult| r.x_hat /= design.scale;
    match &mut result {
        Ok(r) => rescale(r),
        Err(e) => {
            if let Error::Stage { source, .. } = e {
                if let Error::Ambiguous { partial, .. } = source.as_mut() {
                    rescale(partial);
                }
            }
        }
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gradient_query, init_deep_design, init_two_layer, Batch, QueryBudget};
    use ndarray::array;

    fn basis_batch(d: usize) -> Batch {
        let mut x = Array2::zeros((d, 2));
        x[[0, 0]] = 1.0;
        x[[1, 1]] = 1.0;
        Batch::classification(x, array![1.0, -1.0]).unwrap()
    }

    fn min_perm_error(x: &Array2<f64>, xh: &Array2<f64>) -> f64 {
        let e = |a: usize, b: usize| (&x.column(a) - &xh.column(b)).mapv(|v| v * v).sum();
        ((e(0, 0) + e(1, 1)).min(e(0, 1) + e(1, 0)) / 2.0).sqrt()
    }

    #[test]
    fn two_layer_poly23_end_to_end() {
        let batch = basis_batch(10);
        let params = init_two_layer(5000, 10, 1, Activation::poly23(), 30.0).unwrap();
        let g = gradient_query(&params, &batch, 0.0, 1, &mut QueryBudget::new()).unwrap();
        for variant in [None, Some(Variant::FirstLayerAlt)] {
            let mut cfg = AttackConfig::new(2);
            cfg.variant = variant;
            let r = match run_attack_two_layer(&params, &g, &cfg) {
                Ok(r) => r,
                Err(e) => e.partial_result().cloned().expect("only ambiguity is tolerated"),
            };
            assert!(min_perm_error(batch.x(), &r.x_hat) < 0.5, "{variant:?}");
        }
    }

    #[test]
    fn moment_subspace_matches_standard_span() {
        // With the moment source the first-layer variant shares P with the
        // standard estimator, so both land on the same subspace.
        let batch = basis_batch(8);
        let params = init_two_layer(3000, 8, 2, Activation::poly23(), 30.0).unwrap();
        let g = gradient_query(&params, &batch, 0.0, 2, &mut QueryBudget::new()).unwrap();
        let w = params.first_layer().view();
        let a = params.a().view();
        let act = params.output_activation();
        let cfg = AttackConfig::new(2);
        let (_, std_sub) = estimate_moments(&g, w, a, act, &cfg).unwrap();
        let mut alt = cfg.clone();
        alt.variant = Some(Variant::FirstLayerAlt);
        alt.subspace = SubspaceSource::Moment;
        let (est, sub) = estimate_moments(&g, w, a, act, &alt).unwrap();
        assert_eq!(est.variant, Variant::FirstLayerAlt);
        assert!(crate::tensor::projector_distance(std_sub.v.view(), sub.v.view()) < 1e-8);
    }

    #[test]
    fn deep_design_rejects_plain_network() {
        let params = init_two_layer(10, 3, 0, Activation::relu(), 0.0).unwrap();
        assert!(DeepDesign::extract(&params).is_err());
        let relu = Activation::relu();
        let deep = init_deep_design(3, 8, 3, 0, &[relu.clone(), relu.clone()], 0.0).unwrap();
        let design = DeepDesign::extract(&deep).unwrap();
        assert_eq!(design.scale, 1.0);
        assert_eq!(design.z, init_two_layer(8, 3, 0, relu, 0.0).unwrap().first_layer().clone());
        let leaky = Activation::leaky_relu();
        let deep = init_deep_design(4, 8, 3, 0, &vec![leaky; 3], 0.0).unwrap();
        assert!((DeepDesign::extract(&deep).unwrap().scale - 1.0001).abs() < 1e-15);
    }

    #[test]
    fn first_layer_variant_rejects_relu() {
        let batch = basis_batch(4);
        let params = init_two_layer(200, 4, 1, Activation::relu(), 30.0).unwrap();
        let g = gradient_query(&params, &batch, 0.0, 1, &mut QueryBudget::new()).unwrap();
        let mut cfg = AttackConfig::new(2);
        cfg.variant = Some(Variant::FirstLayerAlt);
        assert!(matches!(run_attack_two_layer(&params, &g, &cfg), Err(Error::Unsupported(_))));
    }
}
