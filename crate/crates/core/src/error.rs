use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A quantity that must be nonnegative came out meaningfully negative.
    #[error("numerical consistency violated: {0}")]
    NumericalConsistency(String),

    /// Trace drift over one segment was too large; raise the substep count.
    #[error("integration accuracy: trace drift {drift:e} exceeds {limit:e}")]
    IntegrationAccuracy { drift: f64, limit: f64 },

    #[error("cost guard: dimension {dim} exceeds limit {limit}")]
    CostGuard { dim: usize, limit: usize },

    #[error("degenerate mean spin: |<J>| = {magnitude:e} is below {threshold:e}")]
    DegenerateSpin { magnitude: f64, threshold: f64 },

    #[error("evaluation failed in generation {generation}: {source}")]
    Evaluation {
        generation: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
