use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid {what}: {detail}")]
    Invalid { what: &'static str, detail: String },

    #[error("stationary distribution is not unique: {} closed communicating classes {classes:?}", classes.len())]
    NonUniqueStationary { classes: Vec<Vec<usize>> },

    #[error("reset not recurrent: stationary mass of reset state {0} is zero")]
    ResetNotRecurrent(usize),

    #[error("latent block {0} has zero mass under the weighting")]
    ZeroMassBlock(usize),

    #[error("metric identifies behaviorally distinct latents {0} and {1}")]
    MetricIdentifiesDistinct(usize, usize),

    #[error("empty batch")]
    EmptyBatch,

    #[error("neighborhood constant c = {0} outside the admissible range (1, 2)")]
    NeighborhoodConstant(f64),

    #[error("sampling distribution must have full support; state {0} has zero mass")]
    SamplingSupport(usize),

    #[error("precondition of {check} failed: {detail}")]
    Precondition { check: &'static str, detail: String },

    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("{0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn precondition(check: &'static str, detail: impl Into<String>) -> Self {
        Error::Precondition {
            check,
            detail: detail.into(),
        }
    }
}
