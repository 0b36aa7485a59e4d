use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch { expected: Vec<usize>, actual: Vec<usize> },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("layers {first} and {second} do not compose: {reason}")]
    ShapeComposition {
        first: usize,
        second: usize,
        reason: String,
    },

    #[error("invalid layer {index}: {reason}")]
    InvalidLayer { index: usize, reason: String },

    #[error("model has no valid last convolutional layer designation ({0})")]
    MissingLastConv(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value encountered at step {step}")]
    NonFinite { step: usize },

    #[error("heatmap has no primary activation source")]
    NoPrimarySource,

    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimMismatch(Vec<usize>, Vec<usize>),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("insufficient samples for class {class}: needed {needed}, found {found}")]
    InsufficientSamples { class: usize, needed: usize, found: usize },

    #[error("malformed profile file: {0}")]
    MalformedProfiles(String),

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("model fingerprint mismatch: store built for {stored:016x}, serving {serving:016x}")]
    FingerprintMismatch { stored: u64, serving: u64 },

    #[error("no profile for class {0}")]
    MissingProfile(usize),

    #[error("recovery impossible: {0}")]
    RecoveryImpossible(String),

    #[error("invalid dataset: {0}")]
    Dataset(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
