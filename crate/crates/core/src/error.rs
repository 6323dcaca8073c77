use thiserror::Error;

use crate::net::ValidationIssue;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid network: {}", format_issues(.0))]
    InvalidNetwork(Vec<ValidationIssue>),

    #[error("layer {layer}: activation `{kind}` is not diagonal-linear")]
    NonlinearActivation { layer: usize, kind: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("covariance is not symmetric positive semidefinite: {0}")]
    NotPsd(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    #[error("linear system is singular (residual {residual:.3e})")]
    Singular { residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible targets: {0}")]
    Infeasible(String),

    #[error("IDX parse error at byte {offset}: {message}")]
    Idx { offset: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    /// True for errors caused by bad input (as opposed to numerical or I/O failures).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidNetwork(_)
                | Error::NonlinearActivation { .. }
                | Error::InvalidArgument(_)
                | Error::NotPsd(_)
                | Error::Precondition(_)
                | Error::Infeasible(_)
                | Error::Idx { .. }
                | Error::Json(_)
        )
    }
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
