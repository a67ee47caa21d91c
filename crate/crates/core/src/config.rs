// SPDX-License-Identifier: Apache-2.0

//! Run configuration: every tunable of the pipeline with its default,
//! loadable from a TOML file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envelope::{AmConfig, F0Config};
use crate::error::{Error, Result};
use crate::features::{FeatureLayout, PeakPicking};
use crate::models::{FinalModel, GridConfig};
use crate::spectrogram::SpectrogramConfig;
use crate::synth::CorpusSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub n_formants: usize,
    pub dct_order: usize,
    pub picking: PeakPicking,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            n_formants: 6,
            dct_order: 3,
            picking: PeakPicking::default(),
        }
    }
}

impl FeatureConfig {
    pub fn layout(&self) -> Result<FeatureLayout> {
        FeatureLayout::new(self.n_formants, self.dct_order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
    pub final_model: FinalModel,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 5,
            seed: 0,
            final_model: FinalModel::FoldAverage,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Speaker kept when a segments file is given.
    pub speaker: String,
    pub am: AmConfig,
    pub f0: F0Config,
    pub spectrogram: SpectrogramConfig,
    pub features: FeatureConfig,
    pub cv: CvConfig,
    pub grid: GridConfig,
    pub corpus: CorpusSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            speaker: "PAR".into(),
            am: AmConfig::default(),
            f0: F0Config::default(),
            spectrogram: SpectrogramConfig::default(),
            features: FeatureConfig::default(),
            cv: CvConfig::default(),
            grid: GridConfig::default(),
            corpus: CorpusSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::FileNotFound(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Applies one seed to every seeded stage.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.cv.seed = seed;
        self.corpus.seed = seed;
        self
    }
}
