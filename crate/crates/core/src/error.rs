use std::path::PathBuf;

use thiserror::Error;

use crate::bank::MissingPattern;

#[derive(Error, Debug)]
pub enum Error {
    #[error("vector norm {norm:e} is at or below the degeneracy threshold")]
    NormTooSmall { norm: f64 },
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("component key out of range: {0}")]
    KeyOutOfRange(String),
    #[error("modality presence does not match pattern {pattern:?}")]
    PatternMismatch { pattern: MissingPattern },
    #[error("no modality present")]
    NoModalityPresent,
    #[error("threshold {0} is not in (0, 1)")]
    InvalidThreshold(f64),
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("label kind does not match task")]
    LabelKind,
    #[error("invalid loss config: {0}")]
    InvalidLossConfig(String),
    #[error("invalid optimizer config: {0}")]
    InvalidOptimConfig(String),
    #[error("step {step} outside [0, {total}]")]
    InvalidStep { step: usize, total: usize },
    #[error("non-finite gradient at index {0}")]
    NonFiniteGradient(usize),
    #[error("sample {0} already has a missing modality")]
    NotComplete(usize),
    #[error("missing rate {0} is not in [0, 1]")]
    InvalidMissingRate(f64),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file truncated")]
    TruncatedFile,
    #[error("inconsistent header: {0}")]
    InconsistentHeader(String),
    #[error("malformed record {index}: {reason}")]
    BadRecord { index: usize, reason: String },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("invalid config: {0}")]
    ConfigInvalid(String),
    #[error("data unavailable at {path}: {reason}")]
    DataUnavailable { path: PathBuf, reason: String },
    #[error("unknown head {0:?}")]
    UnknownHead(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the error's category.
    pub fn exit_code(&self) -> i32 {
        use Error::*;
        match self {
            ConfigInvalid(_) | UnknownHead(_) | InvalidLossConfig(_) | InvalidOptimConfig(_)
            | InvalidSpec(_) | InvalidMissingRate(_) | InvalidThreshold(_) | Json(_) => 2,
            DataUnavailable { .. } | BadMagic { .. } | VersionMismatch { .. } | TruncatedFile
            | InconsistentHeader(_) | BadRecord { .. } | NotComplete(_) => 3,
            NormTooSmall { .. } | InvalidDistribution(_) | NonFiniteGradient(_) => 4,
            Io(_) | Csv(_) => 5,
            _ => 6,
        }
    }
}
