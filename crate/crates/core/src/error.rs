use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{field}: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid atom: {0}")]
    InvalidAtom(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("infeasible point: {0}")]
    Infeasible(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("solver failure at iteration {iteration}: {reason}")]
    SolverFailure { iteration: usize, reason: String },

    #[error("iterates left the bounded region at iteration {iteration}: norm {norm:.6e} exceeds {bound:.6e}")]
    Diverged {
        iteration: usize,
        norm: f64,
        bound: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("reference is not a KKT pair: {0}")]
    NotKkt(String),

    #[error("parameter mismatch: {0}")]
    Mismatch(String),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
