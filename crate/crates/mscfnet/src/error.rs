use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("{context}: groups={groups} does not divide channels={channels}")]
    GroupMismatch {
        context: &'static str,
        groups: usize,
        channels: usize,
    },

    #[error("convolution output would be empty ({h}x{w})")]
    EmptyOutput { h: isize, w: isize },

    #[error("pooling window {kh}x{kw} does not fit input {h}x{w}")]
    EmptyWindow {
        kh: usize,
        kw: usize,
        h: usize,
        w: usize,
    },

    #[error("cross-channel convolution kernel length {0} must be odd")]
    EvenKernel(usize),

    #[error("broadcast shapes incompatible: {a} vs {b}")]
    BroadcastMismatch { a: String, b: String },

    #[error("upsample factor {0} unsupported (expected 1, 2 or 4)")]
    BadUpsampleFactor(usize),

    #[error("backward already consumed this tape")]
    TapeConsumed,

    #[error("backward requires a scalar loss node, got shape {0}")]
    NonScalarLoss(String),

    #[error("invalid network config: {0}")]
    InvalidConfig(String),

    #[error("input extent {extent} of axis {axis} not divisible by {divisor}")]
    NotDivisible {
        axis: &'static str,
        extent: usize,
        divisor: usize,
    },

    #[error("unknown preset `{0}`; known presets: {1}")]
    UnknownPreset(String, String),

    #[error("label value {value} out of range for {classes} classes")]
    LabelOutOfRange { value: u8, classes: usize },

    #[error("training diverged: non-finite loss at iteration {iteration}")]
    Diverged { iteration: usize },

    #[error("weight file: bad magic bytes")]
    BadMagic,

    #[error("weight file: unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("weight file: truncated at entry {0}")]
    TruncatedAtEntry(usize),

    #[error("weight file census mismatch: {0}")]
    CensusMismatch(String),

    #[error("pixmap: {message} at byte offset {offset}")]
    MalformedPixmap { message: String, offset: usize },

    #[error("run config line {line}: {message}")]
    BadRunConfig { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
