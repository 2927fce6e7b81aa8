use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("state {state} has no active links")]
    NoActiveLinks { state: String },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("policy table is missing {missing} trading opportunities (first: {})", .examples.join(", "))]
    IncompleteTable {
        missing: usize,
        examples: Vec<String>,
    },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("no price for {0}: the link is not active")]
    InactiveLink(String),

    #[error("bundled token+information trades are not supported ({0})")]
    BundledTrade(String),

    #[error("numerical failure in state {state}: {reason}")]
    Numerical { state: String, reason: String },

    #[error("solver at period {period}: {source}")]
    AtPeriod {
        period: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("internal sequencing error: {0}")]
    Sequencing(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("output error: {0}")]
    Output(String),
}

impl Error {
    /// True for failures of the linear algebra rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical { .. } => true,
            Error::AtPeriod { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
