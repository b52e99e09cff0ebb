//! Errors raised by the computational modules.
//!
//! File-format problems have their own type, [`crate::io::ParseError`], because
//! they always carry a line number and map to a different CLI exit code.

use thiserror::Error;

use crate::model::Mode;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },

    #[error("region has zero total {basis}")]
    EmptyPopulation { basis: &'static str },

    #[error("unknown zone '{0}'")]
    UnknownZone(String),

    #[error("duplicate zone '{0}'")]
    DuplicateZone(String),

    #[error("invalid count {value} for zone '{zone}'")]
    InvalidCount { zone: String, value: f64 },

    #[error("invalid duration {0}")]
    InvalidDuration(f64),

    #[error("invalid impedance parameters alpha={alpha} beta={beta}")]
    InvalidParams { alpha: f64, beta: f64 },

    #[error("invalid threshold {0}")]
    InvalidThreshold(f64),

    #[error("threshold {tau} exceeds the matrix prune bound {max_threshold}")]
    ThresholdExceedsPrune { tau: f64, max_threshold: f64 },

    #[error("unknown opportunity kind '{0}'")]
    UnknownKind(String),

    #[error("impedance parameters are for {params}, matrix is {matrix}")]
    ModeMismatch { params: Mode, matrix: Mode },

    #[error("no impedance parameters for purpose '{purpose}' and mode {mode}")]
    MissingParams { purpose: String, mode: Mode },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("key mismatch: {0}")]
    KeyMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("insufficient variation: {0}")]
    InsufficientVariation(String),

    #[error("invalid speed {0} mi/h")]
    InvalidSpeed(f64),

    #[error("zone '{0}' has no centroid")]
    MissingGeometry(String),

    #[error("no disadvantage index for populated zone '{0}'")]
    MissingIndex(String),

    #[error("invalid lambda {0}")]
    InvalidLambda(f64),

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
