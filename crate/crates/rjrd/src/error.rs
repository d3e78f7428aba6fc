//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by kernel, spectral, divergence, and test operations.
#[derive(Debug, Error)]
pub enum Error {
    /// Inputs have incompatible shapes.
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    /// Input data violates a precondition (non-finite entries, bad labels,
    /// out-of-range indices, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration value is out of its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    /// All pairwise distances vanish, so no positive bandwidth exists.
    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    /// The requested operation is not defined for this configuration.
    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    /// A numerical routine failed or produced out-of-tolerance values.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
