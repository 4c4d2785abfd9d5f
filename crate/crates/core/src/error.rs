use std::path::PathBuf;

/// Every failure the simulator, learner and harness can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate vector: norm {norm:e} is below tolerance")]
    DegenerateVector { norm: f64 },

    #[error("invalid range: lo {lo} > hi {hi}")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error("step called on a finished episode")]
    SteppedTerminalEpisode,

    #[error("no alive collectible to target")]
    NoTarget,

    #[error("action branch `{branch}` index {index} out of range (cardinality {cardinality})")]
    IndexOutOfRange {
        branch: &'static str,
        index: usize,
        cardinality: usize,
    },

    #[error("curiosity model not initialized")]
    ModelNotInitialized,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),

    #[error("non-finite loss: {0}")]
    NonFiniteLoss(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("checkpoint version mismatch: found `{found}`, expected `{expected}`")]
    VersionMismatch { found: String, expected: String },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
