use thiserror::Error;

use crate::model::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameters: {}", join_violations(.0))]
    InvalidParams(Vec<Violation>),

    #[error("eigen-solver did not converge (dim {dim}, frobenius norm {frobenius:e}, max |entry| {max_abs:e})")]
    EigenNonConvergence {
        dim: usize,
        frobenius: f64,
        max_abs: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("zonal series did not converge: truncation estimate {estimate:e} at degree {degree}")]
    SeriesConvergence { estimate: f64, degree: usize },

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("degenerate endpoint law at t = 0 (point mass at x0)")]
    DegenerateEndpoint,

    #[error("state numerically singular at step {step}")]
    SingularPath { step: usize },

    #[error("path excluded: {0}")]
    ExcludedPath(String),

    #[error("inconclusive experiment: {0}")]
    Inconclusive(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
