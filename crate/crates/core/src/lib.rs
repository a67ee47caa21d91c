// SPDX-License-Identifier: Apache-2.0

//! Rhythm-formant analysis of speech: amplitude and frequency envelopes,
//! low-frequency rhythm spectrograms, formant and DCT features, and small
//! SVM / SVR / regression-tree learners with k-fold model averaging.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dataset;
pub mod dct;
pub mod envelope;
pub mod error;
pub mod features;
pub mod models;
pub mod pipeline;
pub mod signal_io;
pub mod spectrogram;
pub mod synth;

pub use dataset::{Fold, FoldPlan, Label, Manifest, ManifestRow, Stratify};
pub use envelope::{am_envelope, estimate_f0, fm_envelope, AmConfig, EnvelopeKind, EnvelopeSeries, F0Config};
pub use error::{Error, Result};
pub use features::{combined_features, FeatureLayout, FeatureRow, FeatureTable, FeatureVector, PeakPicking};
pub use signal_io::{AudioBuffer, Segment, SegmentList};
pub use spectrogram::{rhythm_spectrogram, RhythmSpectrogram, SpectrogramConfig};
pub use config::{CvConfig, FeatureConfig, RunConfig};
pub use pipeline::{FeatureMeta, ModelArtifact};
