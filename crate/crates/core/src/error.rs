use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A pathloss model or network configuration violates one of its invariants.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Adaptive quadrature ran out of subdivisions before meeting its tolerance.
    #[error("quadrature did not converge ({context}): estimate {estimate:e}, error bound {error_bound:e}")]
    Accuracy {
        context: String,
        estimate: f64,
        error_bound: f64,
    },

    /// A probability left [0, 1] by more than the tolerated rounding slack.
    #[error("numerical instability: {0}; tighten the quadrature tolerances")]
    NumericalInstability(String),

    /// The throughput profile handed to the density search was not unimodal.
    #[error("throughput profile is not unimodal: {0}")]
    Shape(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn model(msg: impl Into<String>) -> Self {
        Error::InvalidModel(msg.into())
    }

    /// Attach a context label to an accuracy error, leaving other variants alone.
    pub(crate) fn within(self, context: impl Into<String>) -> Self {
        match self {
            Error::Accuracy {
                context: inner,
                estimate,
                error_bound,
            } => Error::Accuracy {
                context: format!("{}: {}", context.into(), inner),
                estimate,
                error_bound,
            },
            other => other,
        }
    }

    /// True for input-validation failures, false for numerical failures.
    pub fn is_input_error(&self) -> bool {
        matches!(self, Error::Domain(_) | Error::InvalidModel(_))
    }
}
