use thiserror::Error;

use crate::quadrature::QuadratureResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid model field `{field}`: {reason}")]
    InvalidModel { field: &'static str, reason: String },

    #[error("invalid input `{field}`: {reason}")]
    InvalidInput { field: &'static str, reason: String },

    #[error("argument {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("quadrature did not converge: estimate {}, error {} after {} nodes", .0.value, .0.abs_error_estimate, .0.nodes_used)]
    NonConvergence(Box<QuadratureResult>),

    #[error("integral diverges ({0})")]
    Divergent(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("pure-jump exact simulation requires zero volatility (got {volatility})")]
    ModeMismatch { volatility: f64 },

    #[error("{censored} of {total} samples are censored")]
    CensoredData { censored: usize, total: usize },

    #[error("need at least {required} samples, got {got}")]
    InsufficientData { required: usize, got: usize },
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_) | Error::Divergent(_) | Error::Domain { .. }
        )
    }
}
