use thiserror::Error;

/// Errors produced across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("space too large to enumerate: {size} states exceeds cap {cap}")]
    SpaceTooLarge { size: u128, cap: u64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("schedule must start at 1 and be strictly decreasing")]
    InvalidSchedule,

    #[error("no communication between chains; widen the pilot schedule")]
    NoCommunication,

    #[error("power iteration did not converge within {0} iterations")]
    NonConvergence(usize),

    #[error("kernel has no unique stationary distribution (not irreducible)")]
    NotIrreducible,

    #[error("interpolation query {0} outside the knot range [{1}, {2}]")]
    OutOfRange(f64, f64, f64),

    #[error("config error: {0}")]
    Config(String),

    #[error("bad IDX magic 0x{0:08x} (expected 0x00000803)")]
    BadIdxMagic(u32),

    #[error("truncated IDX file: expected {expected} bytes of pixel data, found {found}")]
    TruncatedIdx { expected: usize, found: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("{context}: {source}")]
    WithContext {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// CLI process exit code: 2 for configuration/validation problems, 3 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::InvalidParameter { .. }
            | Error::InvalidSchedule
            | Error::DimensionMismatch { .. }
            | Error::Parse { .. } => 2,
            Error::WithContext { source, .. } => source.exit_code(),
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attaches run-stage context to errors bubbling out of a pipeline stage.
pub trait ResultExt<T> {
    fn stage(self, context: &str) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, context: &str) -> Result<T> {
        self.map_err(|source| Error::WithContext {
            context: context.to_string(),
            source: Box::new(source),
        })
    }
}
