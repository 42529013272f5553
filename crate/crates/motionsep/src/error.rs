use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used to map failures to process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or configuration supplied by the caller.
    Usage,
    /// Malformed, missing, or inconsistent data.
    Data,
    /// Numerical failure (non-finite values, diverging training).
    Numerical,
}

/// All failure modes of the separation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("input too short: {got} samples, need at least {need}")]
    InputTooShort { got: usize, need: usize },

    #[error("window overlap violated: hop {hop} exceeds frame {frame}")]
    WindowOverlapViolated { hop: usize, frame: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("sample rate mismatch: {left} Hz vs {right} Hz")]
    SampleRateMismatch { left: u32, right: u32 },

    #[error("invalid threshold {0}: must lie strictly inside (0, 1)")]
    InvalidThreshold(f64),

    #[error("invalid waveform: {0}")]
    InvalidWaveform(String),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("wav {path}: {reason}")]
    Wav { path: PathBuf, reason: String },

    #[error("flow file {path}: {reason}")]
    Flo { path: PathBuf, reason: String },

    #[error("spectrogram container {path}: {reason}")]
    Container { path: PathBuf, reason: String },

    #[error("checkpoint {path}: {reason} (at byte {offset})")]
    Checkpoint {
        path: PathBuf,
        reason: String,
        offset: u64,
    },

    #[error("manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("stage {stage} infeasible: {reason}")]
    InfeasibleStage { stage: u8, reason: String },

    #[error("variant {variant} is missing required input: {missing}")]
    MissingModality { variant: String, missing: String },

    #[error("sprite placement failed after {0} attempts")]
    PlacementFailed(usize),

    #[error("silent reference signal at index {0}")]
    SilentReference(usize),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("non-finite loss {value} at step {step}; aborting")]
    NonFiniteLoss { step: u64, value: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image {path}: {reason}")]
    Image { path: PathBuf, reason: String },
}

impl Error {
    /// Exit-code classification: usage (1), data (2), numerical (3).
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidThreshold(_) => ErrorKind::Usage,
            Error::NonFinite(_) | Error::NonFiniteLoss { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
