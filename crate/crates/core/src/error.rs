use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parameter {0:?} lies outside the parameter space")]
    OutsideSpace(Vec<f64>),

    #[error("non-unique stationary distribution")]
    NonUniqueStationary,

    #[error("not primitive: no power Q^r with r <= {max_power} is entrywise positive")]
    NotPrimitive { max_power: usize },

    #[error("filter degenerate at t = {t}: observation has zero likelihood under every state")]
    FilterDegenerate { t: usize },

    #[error("brute-force enumeration needs {paths} paths, above the limit of {limit}")]
    EnumerationTooLarge { paths: f64, limit: f64 },

    #[error("constants unavailable: {0}")]
    ConstantsUnavailable(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("identifiability failure: J({a:?} | {b:?}) = {j} is not positive beyond Monte Carlo noise (se {se})")]
    Identifiability { a: Vec<f64>, b: Vec<f64>, j: f64, se: f64 },

    #[error("covering of annulus j = {j} used {count} balls, above the bound {bound}")]
    CoveringBound { j: usize, count: usize, bound: f64 },

    #[error("B_n mass unresolved; increase samples")]
    UnresolvedPriorMass,

    #[error(
        "matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, condition number {condition:e})"
    )]
    NotPositiveDefinite { min_eigenvalue: f64, condition: f64 },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("config error{}: {message}", path.as_ref().map(|p| format!(" in {}", p.display())).unwrap_or_default())]
    Config { path: Option<PathBuf>, message: String },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config { path: None, message: msg.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::InvalidArgument(_) | Error::Dimension { .. } | Error::OutsideSpace(_) => 2,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) => 1,
            _ => 3,
        }
    }
}
