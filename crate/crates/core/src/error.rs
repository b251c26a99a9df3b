use thiserror::Error;

use crate::copula::RhoVector;

pub type Result<T> = std::result::Result<T, TwcmError>;

#[derive(Debug, Error)]
pub enum TwcmError {
    /// A parameter is outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An observation or probability is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The copula constants cannot be formed (nonpositive radicand, invalid rho).
    #[error("degenerate copula parameters: {0}")]
    DegenerateParameters(String),

    /// A wrapped Cauchy kernel with |parameter| = 1 has no density.
    #[error("singular wrapped Cauchy kernel: {0}")]
    SingularKernel(String),

    /// A sampler hit a degenerate conditional law.
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),

    #[error("empty dataset")]
    EmptyData,

    /// Log-density was not finite at the listed (0-based) rows.
    #[error("non-finite log-density at rows {rows:?}")]
    DegenerateRows { rows: Vec<usize> },

    /// No feasible optimum was found; `best` is the best candidate seen, if any.
    #[error("fit failed: {reason}")]
    FitFailure {
        reason: String,
        best: Option<RhoVector>,
    },

    /// A mixture component collapsed twice in a row.
    #[error("mixture component {component} collapsed after reinitialisation; reduce K")]
    ComponentCollapse { component: usize },

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl TwcmError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        TwcmError::Domain(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        TwcmError::InvalidParameter(msg.into())
    }
}
