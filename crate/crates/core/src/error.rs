// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no frames")]
    EmptyAudio,
    #[error("no segments for speaker {0:?}")]
    NoMatchingSegments(String),
    #[error("segment {start_s}..{end_s} s exceeds audio duration {duration_s} s")]
    SegmentOutOfRange {
        start_s: f64,
        end_s: f64,
        duration_s: f64,
    },
    #[error("signal is identically zero")]
    DegenerateSignal,
    #[error("input too short: need {needed} samples, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("spectrum slice is empty")]
    EmptySlice,
    #[error("need at least 2 slices, got {0}")]
    TooFewSlices(usize),
    #[error("DCT order {order} exceeds matrix size {rows}x{cols}")]
    OrderTooLarge {
        order: usize,
        rows: usize,
        cols: usize,
    },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cannot average heterogeneous models: {0}")]
    HeterogeneousModels(String),
    #[error("zero variance: correlation undefined")]
    ZeroVariance,
    #[error("duplicate utterance id {0:?}")]
    DuplicateId(String),
    #[error("malformed row {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
    #[error("feature layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("malformed CSV: {0}")]
    MalformedCsv(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::EmptyAudio => "EmptyAudio",
            Error::NoMatchingSegments(_) => "NoMatchingSegments",
            Error::SegmentOutOfRange { .. } => "SegmentOutOfRange",
            Error::DegenerateSignal => "DegenerateSignal",
            Error::TooShort { .. } => "TooShort",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::EmptySlice => "EmptySlice",
            Error::TooFewSlices(_) => "TooFewSlices",
            Error::OrderTooLarge { .. } => "OrderTooLarge",
            Error::SingleClass => "SingleClass",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::HeterogeneousModels(_) => "HeterogeneousModels",
            Error::ZeroVariance => "ZeroVariance",
            Error::DuplicateId(_) => "DuplicateId",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::UnknownLabel(_) => "UnknownLabel",
            Error::TooFewSamples(_) => "TooFewSamples",
            Error::InvalidSpec(_) => "InvalidSpec",
            Error::LayoutMismatch(_) => "LayoutMismatch",
            Error::MalformedCsv(_) => "MalformedCsv",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
