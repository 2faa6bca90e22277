use thiserror::Error;

/// Errors raised by the solvers, oracles and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented constraint.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// Two vectors that must agree in length did not.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A loss evaluation produced a non-finite value where one was required.
    #[error("evaluation domain error: {0}")]
    EvaluationDomain(String),

    /// An iterate became non-finite.
    #[error("numerical divergence at step {step}: {context}")]
    Divergence { step: usize, context: String },

    /// Quadrature only covers low-dimensional inputs.
    #[error("unsupported dimension {0}: quadrature oracles support d <= 2")]
    UnsupportedDimension(usize),

    /// Every probe was degenerate, nothing could be estimated.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Sequences that must have equal length did not.
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// An anchor index outside `0..n`.
    #[error("index {index} out of range for {len} anchors")]
    IndexOutOfRange { index: usize, len: usize },

    /// Labels were required but the anchor set carries none.
    #[error("anchor set has no labels; {0} requires labeled anchors")]
    MissingLabels(&'static str),

    /// The experiment configuration could not be parsed or validated.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed CSV or JSON input.
    #[error("format error: {0}")]
    Format(String),

    /// A failure inside a solver loop, tagged with the iteration it happened at.
    #[error("iteration {step}: {source}")]
    AtIteration {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Attach iteration context to a failure raised inside a solver loop.
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtIteration {
            step,
            source: Box::new(self),
        }
    }

    /// True when the error is a numerical divergence (non-finite iterate or loss).
    pub fn is_divergence(&self) -> bool {
        match self {
            Error::Divergence { .. } | Error::EvaluationDomain(_) => true,
            Error::AtIteration { source, .. } => source.is_divergence(),
            _ => false,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { context, expected, got })
    }
}
