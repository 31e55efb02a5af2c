//! Error taxonomy shared across the library.

use thiserror::Error;

/// Library-wide error type.
///
/// Estimation and reconstruction failures carry a `stage` label naming the
/// pipeline step that failed; the CLI surfaces it on stderr.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("estimation failed at {stage}: {message}")]
    Estimation { stage: &'static str, message: String },

    #[error("reconstruction failed at {stage}: {message}")]
    Reconstruction { stage: &'static str, message: String },

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Codec(String),
}

impl From<image::ImageError> for SimError {
    fn from(e: image::ImageError) -> Self {
        SimError::Codec(e.to_string())
    }
}

impl From<tiff::TiffError> for SimError {
    fn from(e: tiff::TiffError) -> Self {
        SimError::Codec(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    pub fn parameter(msg: impl Into<String>) -> Self {
        SimError::Parameter(msg.into())
    }

    pub fn dimension(msg: impl Into<String>) -> Self {
        SimError::Dimension(msg.into())
    }

    pub fn estimation(stage: &'static str, msg: impl Into<String>) -> Self {
        SimError::Estimation {
            stage,
            message: msg.into(),
        }
    }

    pub fn reconstruction(stage: &'static str, msg: impl Into<String>) -> Self {
        SimError::Reconstruction {
            stage,
            message: msg.into(),
        }
    }
}
