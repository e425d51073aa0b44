use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid size: {0}")]
    InvalidSize(String),
    #[error("could not sample a connected graph after {attempts} attempts")]
    Unconnectable { attempts: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("insufficient samples: need at least {required}, got {got}")]
    InsufficientSamples { required: usize, got: usize },
    #[error("invalid objective: {0}")]
    InvalidObjective(String),
    #[error("reference solver did not reach tolerance {tol:e} in {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        tol: f64,
        residual: f64,
    },
    #[error("invalid partition: {0}")]
    InvalidPartition(String),
    #[error("parameter violation: {0}")]
    ParameterViolation(String),
    #[error("non-finite iterate detected at iteration {iteration}")]
    Diverged { iteration: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("closed form restricted to tau >= 2, got {0}")]
    DomainRestricted(usize),
    #[error("insufficient logging: {0}")]
    InsufficientLogging(String),
    #[error("config parse error at line {line}: {message}")]
    ConfigParse { line: usize, message: String },
    #[error("config key `{key}`: {message}")]
    ConfigValue { key: String, message: String },
    #[error("IDX format error: {0}")]
    Format(String),
    #[error("inconsistent IDX pair: {images} images but {labels} labels")]
    InconsistentPair { images: usize, labels: usize },
    #[error("empty input: {0}")]
    EmptyInput(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
