use std::fmt;

use crate::colorimetry::ColorEncoding;

/// Location of a frequency bin as signed cycles-per-pixel offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyBin {
    pub u: f64,
    pub v: f64,
}

impl fmt::Display for FrequencyBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(u={:.6}, v={:.6}) cycles/px", self.u, self.v)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("channel {channel} out of range: {extremum} outside [{low}, {high}]")]
    Range {
        channel: usize,
        extremum: f64,
        low: f64,
        high: f64,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("unstable filter: |denominator| = {min_abs:.3e} at {location} ({count} bins below threshold)")]
    Stability {
        min_abs: f64,
        location: FrequencyBin,
        count: usize,
    },

    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("encoding mismatch: expected {expected:?}, got {actual:?}")]
    Encoding {
        expected: ColorEncoding,
        actual: ColorEncoding,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("value {value} at pixel {index} outside the domain {domain}")]
    Domain {
        index: usize,
        value: f64,
        domain: &'static str,
    },

    #[error("image of {pixels} pixels exceeds the exact-evaluation limit of {limit}")]
    TooLarge { pixels: usize, limit: usize },

    #[error("objective returned a non-finite value {value} at {point:?}")]
    NonFinite { value: f64, point: Vec<f64> },

    #[error("missing data: {0}")]
    MissingData(String),
}

pub type Result<T> = std::result::Result<T, Error>;
