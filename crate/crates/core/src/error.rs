use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented precondition.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Two objects that must share a grid (or frequency list) do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{what} did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// A division by a vanishing quantity, reported with the node position.
    #[error("{what} vanishes at node {index:?} (x = {position:?})")]
    Vanishing {
        what: &'static str,
        index: [usize; 3],
        position: [f64; 3],
    },

    #[error("no stable frequency interval of length >= {min_len}")]
    NoStableInterval { min_len: usize },

    #[error("flat response: {0}")]
    FlatResponse(String),

    /// Wraps an error raised inside a particular sweep of the inversion.
    #[error("sweep n = {n}, inner iteration i = {i}: {source}")]
    Sweep {
        n: usize,
        i: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn mismatch(msg: impl Into<String>) -> Self {
        Error::GridMismatch(msg.into())
    }

    /// Strips sweep context and returns the underlying error.
    pub fn root(&self) -> &Error {
        match self {
            Error::Sweep { source, .. } => source.root(),
            other => other,
        }
    }
}
