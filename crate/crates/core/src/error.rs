use std::path::PathBuf;

use crate::functional::FieldPair;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("{solver} did not converge after {iterations} iterations (last residual {residual:.3e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
        /// Last planar iterate, when the failing solver was the planar minimizer.
        last_iterate: Option<Box<FieldPair>>,
    },

    #[error(
        "exponent argument {value:.3e} exceeds cap {cap:.1} at node {node}; \
         try a smaller initial field or a larger grid"
    )]
    ExponentOverflow { value: f64, cap: f64, node: usize },

    #[error("non-finite field value at node {0}")]
    NonFinite(usize),

    #[error("singular linear system at row {0}")]
    Singular(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParams(msg.into())
    }
}
