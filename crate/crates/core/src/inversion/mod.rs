//! The attack: one gradient response in, reconstructed batch out.
//!
//! The pipeline mirrors the estimator chain: a second-order moment operator
//! on `R^d` gives the span of the batch ([`estimate_subspace`]), a
//! third-order moment restricted to that span ([`estimate_projected_tensor`])
//! is decomposed into rank-one components ([`decompose_projected`]), and
//! the discreteness of the component weights fixes signs and labels
//! ([`recover_signs_labels`]).

mod decompose;
mod moments;
mod pipeline;
mod recover;
mod subspace;

pub use decompose::{decompose_projected, Component, Decomposition};
pub use moments::{
    build_p_operator, estimate_projected_tensor, estimate_projected_tensor_alt, first_moment,
    FirstLayerGram, MomentEstimates, StandardP, ThirdOrderP,
};
pub use pipeline::{estimate_moments, run_attack_deep, run_attack_two_layer, DeepDesign};
pub use recover::{label_candidates, recover_signs_labels, RecoveryContext};
pub use subspace::{estimate_subspace, SubspaceEstimate};

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2};

use crate::activation::Activation;
use crate::error::{Error, Result};

/// Which moment estimators the pipeline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Second-order `P̂` and third-order Hermite tensor from `∇_a L`.
    Standard,
    /// `P̂` contracted from the third-order Hermite tensor along a probe
    /// direction, for activations whose second moment vanishes.
    TanhThirdOrder,
    /// Standard `P̂`, fourth-order Hermite tensor contracted along a probe,
    /// for activations whose third moment vanishes.
    ReluFourthOrder,
    /// Subspace and tensor from the first-layer gradient `∇_W L`.
    FirstLayerAlt,
}

impl Variant {
    /// Estimator choice from the activation's first non-vanishing moments.
    pub fn auto(act: &Activation) -> Result<Variant> {
        match (act.k2(), act.k3()) {
            (Some(3), _) => Ok(Variant::TanhThirdOrder),
            (Some(2), Some(4)) => Ok(Variant::ReluFourthOrder),
            // a missing third order still runs the cubic tensor; weight
            // snapping then reports the degeneracy
            (Some(2), _) => Ok(Variant::Standard),
            _ => Err(Error::Unsupported(format!(
                "{} has no non-vanishing second or third Gaussian moment",
                act.name()
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::TanhThirdOrder => "tanh_third_order",
            Variant::ReluFourthOrder => "relu_fourth_order",
            Variant::FirstLayerAlt => "first_layer_alt",
        }
    }

    /// True when the second-order operator is contracted along the probe.
    pub fn contracts_p(&self) -> bool {
        matches!(self, Variant::TanhThirdOrder)
    }

    /// True when the tensor is a fourth-order contraction.
    pub fn fourth_order(&self) -> bool {
        matches!(self, Variant::ReluFourthOrder)
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "standard" => Ok(Variant::Standard),
            "tanh_third_order" => Ok(Variant::TanhThirdOrder),
            "relu_fourth_order" => Ok(Variant::ReluFourthOrder),
            "first_layer_alt" | "alt" => Ok(Variant::FirstLayerAlt),
            other => Err(Error::Contract(format!("unknown estimator variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// Labels in `{+1, −1}`; weights are snapped to the two-point grid.
    Classification,
    /// Real labels; no snapping. Assumes every residual is positive.
    Regression,
}

/// Where the first-layer estimator takes its subspace from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SubspaceSource {
    /// Rows of the first-layer gradient, which lie in the span of the batch.
    #[default]
    FirstLayerGram,
    /// The second-order moment of the output-layer gradient, as for the
    /// other variants.
    Moment,
}

impl FromStr for SubspaceSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gram" | "first_layer_gram" => Ok(SubspaceSource::FirstLayerGram),
            "moment" => Ok(SubspaceSource::Moment),
            other => Err(Error::Unsupported(format!("unknown subspace source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    /// Number of samples to recover (assumed known to the attacker).
    pub batch_size: usize,
    /// Output bias of the victim.
    pub bias: f64,
    pub mode: RecoveryMode,
    /// `None` picks the estimator from the activation.
    pub variant: Option<Variant>,
    /// Only consulted by the first-layer variant.
    pub subspace: SubspaceSource,
    /// Random slices fed to joint diagonalization.
    pub projections: usize,
    pub power_tol: f64,
    pub power_max_iters: usize,
    pub joint_tol: f64,
    pub joint_max_sweeps: usize,
    /// Seeds the attacker's own randomness (power-iteration start, slice
    /// directions, fallback probe).
    pub seed: u64,
}

impl AttackConfig {
    pub fn new(batch_size: usize) -> Self {
        Self {
            batch_size,
            bias: 30.0,
            mode: RecoveryMode::Classification,
            variant: None,
            subspace: SubspaceSource::default(),
            projections: 100,
            power_tol: 1e-10,
            power_max_iters: 200,
            joint_tol: 1e-12,
            joint_max_sweeps: 100,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Diagnostics {
    pub variant: Option<Variant>,
    pub power_iters: usize,
    pub subspace_residual: f64,
    pub joint_diag_residual: f64,
    pub joint_diag_sweeps: usize,
    /// `|s·λ̂ − candidate|` per component (classification mode).
    pub snapping_residuals: Vec<f64>,
    /// Half the spacing of the label candidates.
    pub snapping_tolerance: f64,
    /// Non-fatal numerical conditions (eigengap collapse, unconverged
    /// joint diagonalization, ...).
    pub warnings: Vec<String>,
    /// Threads used for the moment reductions.
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionResult {
    /// Reconstructed samples as columns (`d x B`).
    pub x_hat: Array2<f64>,
    pub y_hat: Array1<f64>,
    /// Component weights after sign correction (snapped in classification
    /// mode).
    pub lambda_hat: Array1<f64>,
    pub signs: Array1<f64>,
    pub diagnostics: Diagnostics,
}
