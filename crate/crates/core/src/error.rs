use std::io;

/// Errors produced by the age estimation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// A text or binary input did not follow its documented format.
    #[error("{what}, line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("invalid {what} file: {msg}")]
    Format { what: &'static str, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Geometric degeneracy: coincident eyes, empty boxes, ROI off-image.
    #[error("degenerate geometry: {0}")]
    Degenerate(String),

    #[error("feature layout mismatch: model expects `{expected}`, got `{found}`")]
    LayoutMismatch { expected: String, found: String },

    #[error("rank deficient: only {found} of {wanted} eigenvalues above threshold")]
    RankDeficient { wanted: usize, found: usize },

    #[error("{algorithm} did not converge after {iterations} iterations")]
    NotConverged {
        algorithm: &'static str,
        iterations: usize,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// True for failures of a numerical routine (as opposed to bad input data).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. } | Error::NotConverged { .. } | Error::Numerical(_)
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
