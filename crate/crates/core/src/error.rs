use thiserror::Error;

use crate::chain::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed chain document.
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid chain: {0}")]
    Validation(ValidationReport),

    #[error("matrix is singular to working precision (pivot magnitude {pivot:e})")]
    Singular { pivot: f64 },

    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("chain does not have the required structure: {0}")]
    Structure(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("infeasible: {0}")]
    Infeasible(String),
}

impl Error {
    /// Process exit code: 1 input/validation, 2 numeric, 3 infeasible.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::Precondition(_)
            | Error::Domain(_)
            | Error::Structure(_) => 1,
            Error::Singular { .. } | Error::NoConvergence { .. } | Error::Numeric(_) => 2,
            Error::Infeasible(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Singular { .. } => "singular",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Precondition(_) => "precondition",
            Error::Domain(_) => "domain",
            Error::Structure(_) => "structure",
            Error::Numeric(_) => "numeric",
            Error::Infeasible(_) => "infeasible",
        }
    }
}
