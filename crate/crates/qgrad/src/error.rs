//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer dimensions do not compose.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A class label lies outside `[0, num_classes)`.
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    /// The gradient is identically zero, so no step direction exists.
    /// Attack loops catch this and take a zero step for the example.
    #[error("degenerate gradient: every component is zero")]
    DegenerateGradient,

    /// A batch or dataset with no examples was passed where at least one
    /// is required.
    #[error("empty {0}")]
    Empty(&'static str),

    /// A configuration value violates its invariant.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An IDX file starts with the wrong magic number.
    #[error("idx: bad magic: expected {expected:#010x}, found {found:#010x}")]
    IdxBadMagic { expected: u32, found: u32 },

    /// An IDX file ends before its declared payload.
    #[error("idx: truncated: needed {needed} bytes, found {found}")]
    IdxTruncated { needed: usize, found: usize },

    /// Image and label files declare different example counts.
    #[error("idx: count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("idx: {extra} unexpected bytes after the payload")]
    IdxTrailingBytes { extra: usize },

    /// A checkpoint file starts with the wrong magic bytes.
    #[error("checkpoint: bad magic")]
    CheckpointBadMagic,

    /// A checkpoint file is truncated or internally inconsistent.
    #[error("checkpoint: malformed: {0}")]
    CheckpointMalformed(String),

    /// Training produced a non-finite loss.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialize: {0}")]
    Json(#[from] serde_json::Error),
}
