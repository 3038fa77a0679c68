use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unscorable pair ({id_a}, {id_b}): no feature is present on both sides")]
    Unscorable { id_a: String, id_b: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("unsupported model format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("model invariant violated: {0}")]
    InvariantViolation(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("precision floor {floor} is infeasible; best achievable precision at nonzero recall is {best}")]
    InfeasiblePrecision { floor: f64, best: f64 },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
