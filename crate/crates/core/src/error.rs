use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("svd did not converge within {sweeps} sweeps on a {rows}x{cols} matrix")]
    SvdNoConvergence { rows: usize, cols: usize, sweeps: usize },
    #[error("no rank-preserving projection found in {tries} draws")]
    ProjectionFailed { tries: usize },
    #[error("mixture is not in reduced form: components {0} and {1} coincide")]
    NotReduced(usize, usize),
    #[error("components {first} and {second} disagree {what}")]
    Inconsistent { first: usize, second: usize, what: String },
    #[error("basis direction {0} is not covered by any component")]
    Uncovered(usize),
    #[error("basis vectors do not form a basis ({0})")]
    NotABasis(String),
    #[error("mixing layer {layer}: no acceptable weight matrix after {tries} draws")]
    MixingRejected { layer: usize, tries: usize },
    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
