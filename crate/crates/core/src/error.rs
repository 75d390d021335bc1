use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quasilacunarity not witnessed at this truncation: {0}")]
    QuasilacunarityNotWitnessed(String),

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("ill-conditioned basis: {0} (reduce N or use extended precision)")]
    IllConditioned(String),

    #[error("eigenvalue {value:e} below the clamp threshold {threshold:e}; moments are inaccurate")]
    NegativeEigenvalue { value: f64, threshold: f64 },

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),

    #[error("sublinear norm under-estimated, re-estimate required: {0}")]
    ReEstimate(String),

    #[error("construction failure: {0}")]
    ConstructionFailure(String),

    #[error("construction bug at n={n}: {detail}")]
    ConstructionBug { n: usize, detail: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
