//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the simulator.
///
/// Variants carry enough context to point at the offending input (field
/// names for parse errors, indices for shape mismatches, frame numbers for
/// pipeline failures) without keeping a backtrace dependency.
#[derive(Debug, Error)]
pub enum Error {
    /// An input vector or grid contained NaN or infinity where finite values
    /// are required.
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },

    /// A configuration field failed validation.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Two containers that must agree in shape did not.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Side-info or embedded bitstream parsing failed.
    ///
    /// `field` names the layout element that could not be read.
    #[error("side info parse error at {field}: {reason}")]
    SideInfoParse {
        field: &'static str,
        reason: &'static str,
    },

    /// A PNG byte stream violated the container format.
    #[error("png error: {0}")]
    Png(String),

    /// Entropy-coded payload was inconsistent with the model or dims.
    #[error("bitstream error: {0}")]
    Bitstream(String),

    /// The receiver observed data inconsistent with the signaled rate map.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// Rate/quality curve construction or comparison failed.
    #[error("curve error: {0}")]
    Curve(String),

    /// A pipeline stage failed while processing a specific frame.
    #[error("frame {frame}: {source}")]
    Frame {
        frame: u64,
        #[source]
        source: Box<Error>,
    },

    /// Filesystem trouble while reading inputs or writing captures.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Wraps an error with the frame index it occurred on.
    pub fn at_frame(self, frame: u64) -> Self {
        Error::Frame {
            frame,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
