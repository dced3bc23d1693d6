use thiserror::Error;

use crate::inversion::ReconstructionResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shapes, unit vectors, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid network design: {0}")]
    InvalidDesign(String),

    #[error("gradient query budget exhausted: the oracle may only be queried once")]
    BudgetExhausted,

    /// Weight snapping could not place a component on the discrete
    /// candidate grid. The best-effort reconstruction is attached.
    #[error(
        "ambiguous recovery for component {component}: residual {residual:.4} exceeds half of the candidate gap {gap:.4}"
    )]
    Ambiguous {
        component: usize,
        residual: f64,
        gap: f64,
        partial: Box<ReconstructionResult>,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn at_stage(self, stage: &'static str) -> Self {
        match self {
            // keep the innermost stage name
            e @ Error::Stage { .. } => e,
            e => Error::Stage {
                stage,
                source: Box::new(e),
            },
        }
    }

    /// Strips stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }

    /// Name of the pipeline stage that failed, when known.
    pub fn stage(&self) -> Option<&'static str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// The best-effort reconstruction carried by an ambiguity error.
    pub fn partial_result(&self) -> Option<&ReconstructionResult> {
        match self.root() {
            Error::Ambiguous { partial, .. } => Some(partial),
            _ => None,
        }
    }

    /// True for failures of the numerics (as opposed to bad input or config).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::NotConverged { .. } | Error::Degenerate(_) | Error::Ambiguous { .. }
        )
    }
}

pub(crate) fn check_dim(context: &str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::contract(format!(
            "{context}: expected dimension {expected}, found {found}"
        )));
    }
    Ok(())
}

pub(crate) fn check_finite<'a>(context: &str, values: impl IntoIterator<Item = &'a f64>) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::contract(format!("{context}: non-finite entry")))
    }
}
