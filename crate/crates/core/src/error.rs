use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Malformed input text: JSON, CSV or probability literals.
    #[error("parse error: {0}")]
    Parse(String),

    /// A model or forest violates one of its declared invariants.
    #[error("invariant violated ({invariant}): {detail}")]
    Invariant {
        invariant: &'static str,
        detail: String,
    },

    #[error("irreducibility: mean matrix is not irreducible")]
    NotIrreducible,

    #[error("no convergence after {iterations} iterations ({what})")]
    NoConvergence { what: &'static str, iterations: u64 },

    #[error("degenerate model: sigma = 0 (every individual has exactly one child)")]
    DegenerateModel,

    #[error("criticality: model is {0:?}, a critical model is required")]
    NotCritical(crate::spectra::Criticality),

    #[error("degenerate spatial laws: Sigma = 0")]
    DegenerateSpatial,

    #[error("missing spatial law for type {ty} and word {word:?}")]
    MissingLaw { ty: usize, word: Vec<usize> },

    #[error("vertex cap of {cap} exceeded")]
    CapExceeded { cap: usize },

    #[error("conditioning event has zero probability: {0}")]
    ZeroProbabilityEvent(String),

    #[error("rejection sampler gave up after {0} attempts")]
    AttemptsExhausted(u64),

    #[error("malformed Lukasiewicz walk at step {0}")]
    MalformedWalk(usize),

    #[error("type {ty} has fewer than {needed} vertices")]
    TypeAbsent { ty: usize, needed: usize },

    #[error("cannot remove type {0}: its self-mean is >= 1")]
    InvalidRemoval(usize),

    #[error("coefficient recursion does not converge: {0}")]
    NonConvergentCoefficients(String),

    #[error("exact rational arithmetic unsupported here: {0}")]
    RationalUnsupported(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invariant(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            invariant,
            detail: detail.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
