use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A factor `x + k*a` of an ascending factorial was not positive.
    #[error("ascending factorial [{x}]_{a}^{n}: factor k={k} is {value}, must be positive")]
    FactorialDomain {
        x: f64,
        a: f64,
        n: u64,
        k: u64,
        value: f64,
    },

    #[error("node `{0}` has no block assignment")]
    UnassignedNode(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("block {0} is empty but was required to be occupied")]
    EmptyBlock(usize),

    #[error("chain has no post-burn-in samples")]
    EmptyChain,

    #[error("{0}")]
    Unsupported(String),

    /// Assumption on the current labeling (positive signal margin) is violated.
    #[error("mu_min = {0} is not positive; the labeling violates the positivity assumption (gamma_b > 1/2 and approximate balance)")]
    NonPositiveMargin(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Numerical failures (domain errors in special functions) as opposed to
    /// malformed data or configuration.
    pub fn is_numerical(&self) -> bool {
        if let Error::Context { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::FactorialDomain { .. } | Error::NonPositiveMargin(_)
        )
    }

    pub fn is_data(&self) -> bool {
        if let Error::Context { source, .. } = self {
            return source.is_data();
        }
        matches!(
            self,
            Error::UnassignedNode(_)
                | Error::UnknownNode(_)
                | Error::Parse { .. }
                | Error::Csv(_)
                | Error::Json(_)
                | Error::EmptyChain
                | Error::EmptyBlock(_)
                | Error::InsufficientData(_)
                | Error::Io(_)
        )
    }
}
