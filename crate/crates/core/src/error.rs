use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A column with zero sample variance cannot be standardized or used as a predictor.
    #[error("constant column `{0}`")]
    ConstantColumn(String),

    #[error("invalid dataset: {0}")]
    InvalidData(String),

    #[error("column `{0}` not found in header")]
    MissingColumn(String),

    #[error("malformed csv at line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid sampler configuration: {0}")]
    InvalidSpec(String),

    /// The marginal likelihood or a conditional draw could not be computed
    /// for the given active set, even after jitter.
    #[error("numerical degeneracy for active set {active:?}: {reason}")]
    Degenerate { active: Vec<usize>, reason: String },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("sweep {sweep}: {source}")]
    Sweep {
        sweep: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("corrupt trace: {0}")]
    Trace(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by the numerics rather than by the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Degenerate { .. } | Error::Singular(_) => true,
            Error::Sweep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
