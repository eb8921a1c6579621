use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain the operation is defined on.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    /// A computed quantity violated a numerical invariant (norm, trace, spectrum).
    #[error("numerical consistency violated: {0}")]
    Consistency(String),

    /// The walker window would leave the preallocated storage.
    #[error("window [{lo}, {hi}] exceeds storage capacity [{min}, {max}]")]
    Capacity { lo: i64, hi: i64, min: i64, max: i64 },

    /// A realization failed inside an ensemble run.
    #[error("realization {index} failed: {source}")]
    Realization {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }

    /// True for errors caused by a numerical invariant rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Consistency(_) => true,
            Error::Realization { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
