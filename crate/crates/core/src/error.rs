use thiserror::Error;

/// Errors raised by the evaluation library.
#[derive(Debug, Error)]
pub enum Error {
    /// A malformed line in an interaction file. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("split: {0}")]
    Split(String),

    #[error("power-law estimation: {0}")]
    Estimation(String),

    #[error("strata assignment: {0}")]
    Assignment(String),

    #[error("item {0:?} is not covered by the strata assignment")]
    Unassigned(String),

    #[error("propensity for item {0:?} is missing or not positive")]
    Propensity(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("{algorithm}: non-finite loss in epoch {epoch}")]
    NonFiniteLoss { algorithm: String, epoch: usize },

    #[error("evaluation: {0}")]
    Evaluation(String),

    /// Argument outside the domain of a numerical routine.
    #[error("domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::Domain(_) | Error::Estimation(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
