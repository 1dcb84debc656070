use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A caller-supplied argument is outside the operation's domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Hypotheses of an analytic bound are not met, so no bound is claimed.
    #[error("bound hypotheses violated: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A softmax row has no admissible entry.
    #[error("row {row} has no admissible entries")]
    DegenerateRow { row: usize },

    #[error("sequence rule {0} has no element within the window")]
    EmptySequence(String),

    #[error("value of term {n} exceeds the exactly representable range")]
    Overflow { n: u32 },
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }
}
