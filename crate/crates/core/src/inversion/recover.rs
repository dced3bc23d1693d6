use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::{Decomposition, Diagnostics, ReconstructionResult, RecoveryMode};
use crate::activation::Activation;
use crate::error::{check_dim, Error, Result};
use crate::tensor::{sym_eig, SymMatrix};

/// What the attacker knows when turning components into samples.
#[derive(Debug, Clone)]
pub struct RecoveryContext<'a> {
    pub act: &'a Activation,
    pub bias: f64,
    pub mode: RecoveryMode,
    /// Norm of the inputs as seen by the attacked layer (1 for a plain
    /// two-layer victim on normalized data).
    pub input_scale: f64,
    /// Unit probe in subspace coordinates. Set for fourth-order tensors,
    /// whose component weights carry a factor `uᵢ·probe`.
    pub probe_b: Option<Array1<f64>>,
    /// First-order moment in subspace coordinates, `Vᵀ Σᵢ rᵢ E[σ′] xᵢ`.
    /// Fourth-order weights are invariant under `uᵢ → −uᵢ`, so signs come
    /// from expanding this vector in the components.
    pub sign_hint: Option<Array1<f64>>,
}

impl<'a> RecoveryContext<'a> {
    pub fn new(act: &'a Activation, bias: f64, mode: RecoveryMode) -> Self {
        Self {
            act,
            bias,
            mode,
            input_scale: 1.0,
            probe_b: None,
            sign_hint: None,
        }
    }

    fn order(&self) -> u32 {
        self.act.k3().unwrap_or(3)
    }

    /// Signed weight per unit residual: `E σ⁽ᵏ⁾` at the input variance
    /// times `scale^k`.
    fn unit_weight(&self) -> Result<f64> {
        let c = self.input_scale;
        let k = self.order();
        Ok(self.act.moment(k, c * c)? * c.powi(k as i32))
    }

    fn mean_output(&self) -> Result<f64> {
        let c = self.input_scale;
        self.act.moment(0, c * c)
    }
}

/// The two weights a component can take in classification mode, as
/// `(label, weight)` for labels `+1` and `−1`.
pub fn label_candidates(ctx: &RecoveryContext) -> Result<[(f64, f64); 2]> {
    let lam = ctx.unit_weight()?;
    let mean = ctx.mean_output()?;
    Ok([1.0, -1.0].map(|y| (y, lam * (mean + ctx.bias - y))))
}

/// Solves `U α = h` for the component matrix `U` by least squares.
fn expand(units: &Array2<f64>, h: ArrayView1<f64>) -> Result<Array1<f64>> {
    let gram = SymMatrix::new(units.t().dot(units))?;
    let e = sym_eig(&gram)?;
    let top = e.values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let rhs = units.t().dot(&h);
    let mut out = Array1::<f64>::zeros(units.ncols());
    for (c, &mu) in e.values.iter().enumerate() {
        if mu.abs() > 1e-12 * top {
            let col = e.vectors.column(c);
            out.scaled_add(col.dot(&rhs) / mu, &col);
        }
    }
    Ok(out)
}

fn sign_of(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Resolves component signs, snaps weights and reads off labels.
///
/// Returns [`Error::Ambiguous`] (carrying the best-effort result) when a
/// weight lies closer to the midpoint of the candidate grid than to either
/// candidate, which is what happens when the moments are too noisy or the
/// activation has no usable third-order moment.
pub fn recover_signs_labels(
    decomposition: &Decomposition,
    v: ArrayView2<f64>,
    ctx: &RecoveryContext,
) -> Result<ReconstructionResult> {
    let comps = &decomposition.components;
    let b = comps.len();
    check_dim("component count", v.ncols(), b)?;
    let d = v.nrows();
    let units = Array2::from_shape_fn((b, b), |(r, c)| comps[c].vector[r]);

    // effective weight per unit residual, and a sign if it is fixed already
    let mut effective = Vec::with_capacity(b);
    let mut fixed_signs: Option<Array1<f64>> = None;
    if let Some(probe) = &ctx.probe_b {
        check_dim("probe dimension", b, probe.len())?;
        for c in comps {
            effective.push(c.weight / c.vector.dot(probe));
        }
        let hint = ctx
            .sign_hint
            .as_ref()
            .ok_or_else(|| Error::contract("even-order recovery needs a first-moment sign hint"))?;
        let slope = sign_of(ctx.act.moment(1, ctx.input_scale.powi(2))?);
        fixed_signs = Some(expand(&units, hint.view())?.mapv(|a| sign_of(a * slope)));
    } else {
        effective.extend(comps.iter().map(|c| c.weight));
    }

    let mut x_hat = Array2::<f64>::zeros((d, b));
    let mut y_hat = Array1::<f64>::zeros(b);
    let mut lambda_hat = Array1::<f64>::zeros(b);
    let mut signs = Array1::<f64>::zeros(b);
    let mut residuals = Vec::with_capacity(b);
    let mut tolerance = 0.0;
    let mut worst: Option<(usize, f64)> = None;

    match ctx.mode {
        RecoveryMode::Classification => {
            let cands = label_candidates(ctx)?;
            let gap = (cands[0].1 - cands[1].1).abs();
            tolerance = 0.5 * gap;
            for i in 0..b {
                let sign_options: &[f64] = match &fixed_signs {
                    Some(s) if s[i] > 0.0 => &[1.0],
                    Some(_) => &[-1.0],
                    None => &[1.0, -1.0],
                };
                let weight_sign = |s: f64| if fixed_signs.is_some() { 1.0 } else { s };
                let mut best = (f64::INFINITY, 1.0, cands[0]);
                for &s in sign_options {
                    for &cand in &cands {
                        let r = (weight_sign(s) * effective[i] - cand.1).abs();
                        if r < best.0 {
                            best = (r, s, cand);
                        }
                    }
                }
                let (r, s, (y, lam)) = best;
                signs[i] = s;
                y_hat[i] = y;
                lambda_hat[i] = lam;
                residuals.push(r);
                if (!(r <= tolerance) || gap <= f64::EPSILON * lam.abs().max(1.0))
                    && worst.is_none_or(|(_, wr)| r > wr || !r.is_finite()) {
                        worst = Some((i, r));
                    }
            }
        }
        RecoveryMode::Regression => {
            let lam = ctx.unit_weight()?;
            if lam == 0.0 {
                return Err(Error::Degenerate(format!(
                    "{} has no usable tensor-order moment",
                    ctx.act.name()
                )));
            }
            let mean = ctx.mean_output()?;
            for i in 0..b {
                // every residual is assumed positive
                let s = match &fixed_signs {
                    Some(f) => f[i],
                    None => sign_of(effective[i] / lam),
                };
                let r = if fixed_signs.is_some() { effective[i] / lam } else { s * effective[i] / lam };
                signs[i] = s;
                lambda_hat[i] = r * lam;
                y_hat[i] = mean + ctx.bias - r;
            }
        }
    }

    for i in 0..b {
        let col = v.dot(&comps[i].vector) * (signs[i] * ctx.input_scale);
        x_hat.column_mut(i).assign(&col);
    }
    let result = ReconstructionResult {
        x_hat,
        y_hat,
        lambda_hat,
        signs,
        diagnostics: Diagnostics {
            snapping_residuals: residuals,
            snapping_tolerance: tolerance,
            ..Diagnostics::default()
        },
    };
    match worst {
        Some((component, residual)) => Err(Error::Ambiguous {
            component,
            residual,
            gap: 2.0 * tolerance,
            partial: Box::new(result),
        }),
        None => Ok(result),
    }
}
