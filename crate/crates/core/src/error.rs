use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point cloud is empty{}", ctx_suffix(.0))]
    EmptyCloud(String),

    #[error("camera intrinsics are not invertible (fx={fx}, fy={fy})")]
    SingularIntrinsics { fx: f64, fy: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("point cloud has no pixel provenance; it was not produced by back-projection")]
    MissingProvenance,

    #[error("graph nodes carry no semantic class ids")]
    MissingClasses,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("speed {speed:.3} m/s is below the low-speed cutoff {cutoff:.3} m/s")]
    LowSpeed { speed: f64, cutoff: f64 },

    #[error("steering angle {0} rad is at or beyond ±π/2")]
    SteeringOutOfRange(f64),

    #[error("malformed file {path}: {detail} (byte offset {offset})")]
    MalformedFile {
        path: PathBuf,
        detail: String,
        offset: u64,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("frame {index} is missing its companion file: {detail}")]
    MissingCompanion { index: usize, detail: String },

    #[error("sequence '{0}' is assigned to more than one split")]
    OverlappingSplit(String),

    #[error("dataset split '{0}' is empty")]
    EmptySplit(String),

    #[error("tensor shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("no forward pass has been taped")]
    NoTape,

    #[error("backward was already called on this tape; run a new forward pass first")]
    TapeConsumed,

    #[error("non-finite gradient in parameter '{0}'")]
    NonFiniteGradient(String),

    #[error("parameter '{0}' has no stored gradient; run backward first")]
    MissingGradient(String),

    #[error("non-finite value in parameter '{0}'")]
    NonFiniteParam(String),

    #[error("non-finite training loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("non-finite time constant in LTC cell (parameter blow-up)")]
    NonFiniteTimeConstant,

    #[error("unknown preset '{name}'; valid presets: {valid}")]
    UnknownPreset { name: String, valid: String },

    #[error("unknown configuration key '{0}'")]
    UnknownConfigKey(String),

    #[error("invalid checkpoint: {0}")]
    InvalidCheckpoint(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn ctx_suffix(ctx: &str) -> String {
    if ctx.is_empty() {
        String::new()
    } else {
        format!(": {ctx}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
