// SPDX-License-Identifier: Apache-2.0

//! End-to-end steps: audio preparation, spectrogram analysis, feature
//! extraction over a manifest, training with cross-validation, evaluation.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::dataset::{quartiles, stratified_kfold_by, FoldPlan, ManifestRow};
use crate::envelope::{am_envelope, fm_envelope, EnvelopeKind};
use crate::error::{Error, Result};
use crate::features::{combined_features, FeatureLayout, FeatureRow, FeatureTable};
use crate::models::{grid_search, AveragedModel, AveragingPath, EvalReport, FoldIndices, GridPoint, HyperParams,
    MetricSet, ModelFamily, Task};
use crate::signal_io::{extract_speaker_segments, normalize_peak, read_wav, AudioBuffer, SegmentList};
use crate::spectrogram::{rhythm_spectrogram, RhythmSpectrogram};
use crate::Manifest;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const ARTIFACT_SCHEMA: &str = "rfa.model_artifact";
pub const ARTIFACT_SCHEMA_VERSION: u32 = 1;
pub const FEATURE_META_SCHEMA: &str = "rfa.feature_meta";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    Ok(std::fs::read(path)?)
}

/// WAV bytes plus optional segments bytes, decoded into a peak-normalized
/// buffer holding only `speaker`'s speech when segments are given.
pub fn prepare_audio(wav: &[u8], segments: Option<&[u8]>, speaker: &str, source_id: &str) -> Result<AudioBuffer> {
    let audio = read_wav(Cursor::new(wav), source_id)?;
    let audio = match segments {
        Some(seg) => extract_speaker_segments(&audio, &SegmentList::from_csv_reader(seg)?, speaker)?,
        None => audio,
    };
    normalize_peak(&audio)
}

pub fn load_prepared(wav_path: &Path, segments_path: Option<&Path>, speaker: &str) -> Result<AudioBuffer> {
    let wav = read_file(wav_path)?;
    let seg = segments_path.map(read_file).transpose()?;
    let id = wav_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    prepare_audio(&wav, seg.as_deref(), speaker, &id)
}

pub fn spectrogram_of(audio: &AudioBuffer, kind: EnvelopeKind, cfg: &RunConfig) -> Result<RhythmSpectrogram> {
    let env = match kind {
        EnvelopeKind::Am => am_envelope(audio, &cfg.am)?,
        EnvelopeKind::Fm => fm_envelope(audio, &cfg.f0)?,
    };
    rhythm_spectrogram(&env, &cfg.spectrogram)
}

/// AM and FM rhythm spectrograms of one prepared utterance.
pub fn analyze(audio: &AudioBuffer, cfg: &RunConfig) -> Result<(RhythmSpectrogram, RhythmSpectrogram)> {
    Ok((spectrogram_of(audio, EnvelopeKind::Am, cfg)?, spectrogram_of(audio, EnvelopeKind::Fm, cfg)?))
}

pub fn utterance_features(audio: &AudioBuffer, cfg: &RunConfig) -> Result<Vec<f64>> {
    let (am, fm) = analyze(audio, cfg)?;
    let f = &cfg.features;
    Ok(combined_features(&am, &fm, f.n_formants, f.dct_order, &f.picking)?.values)
}

struct RowOutcome {
    row: FeatureRow,
    wav_sha256: String,
    segments_sha256: Option<String>,
}

fn row_features(row: &ManifestRow, cfg: &RunConfig) -> Result<RowOutcome> {
    let wav = read_file(&row.wav_path)?;
    let seg = row.segments_path.as_deref().map(read_file).transpose()?;
    let audio = prepare_audio(&wav, seg.as_deref(), &cfg.speaker, &row.utt_id)?;
    let values = utterance_features(&audio, cfg)?;
    Ok(RowOutcome {
        row: FeatureRow {
            utt_id: row.utt_id.clone(),
            label: row.label,
            mmse: row.mmse.map(f64::from),
            values,
        },
        wav_sha256: sha256_hex(&wav),
        segments_sha256: seg.as_deref().map(sha256_hex),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub utt_id: String,
    pub wav_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub segments_sha256: Option<String>,
}

/// Provenance written next to a feature CSV as `<csv>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub schema: String,
    pub library_version: String,
    pub layout: FeatureLayout,
    pub dim: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub manifest_sha256: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub skipped: Vec<SkippedUtterance>,
    pub run_config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedUtterance {
    pub utt_id: String,
    pub error: String,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct FeatureExtraction {
    pub table: FeatureTable,
    pub meta: FeatureMeta,
}

impl FeatureMeta {
    pub fn sidecar_path(csv_path: &Path) -> PathBuf {
        let mut s = csv_path.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: Self = serde_json::from_slice(&read_file(path)?)?;
        if meta.schema != FEATURE_META_SCHEMA {
            return Err(Error::InvalidConfig(format!("unexpected feature meta schema {:?}", meta.schema)));
        }
        Ok(meta)
    }
}

/// Features for every manifest row, ordered by `utt_id`. Rows that fail
/// are listed in `meta.skipped` rather than aborting the run.
pub fn extract_features(manifest: &Manifest, cfg: &RunConfig) -> Result<FeatureExtraction> {
    if manifest.is_empty() {
        return Err(Error::TooFewSamples("manifest has no rows".into()));
    }
    let layout = cfg.features.layout()?;
    let mut rows: Vec<&ManifestRow> = manifest.rows().iter().collect();
    rows.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let results: Vec<(String, Result<RowOutcome>)> =
        rows.par_iter().map(|r| (r.utt_id.clone(), row_features(r, cfg))).collect();
    let mut table = FeatureTable {
        dim: layout.dim(),
        rows: Vec::new(),
    };
    let mut inputs = Vec::new();
    let mut skipped = Vec::new();
    for (utt_id, res) in results {
        match res {
            Ok(o) => {
                inputs.push(InputDigest {
                    utt_id,
                    wav_sha256: o.wav_sha256,
                    segments_sha256: o.segments_sha256,
                });
                table.rows.push(o.row);
            }
            Err(e) => {
                log::warn!("skipping {utt_id}: {e}");
                skipped.push(SkippedUtterance {
                    utt_id,
                    error: e.kind().into(),
                    message: e.to_string(),
                });
            }
        }
    }
    Ok(FeatureExtraction {
        table,
        meta: FeatureMeta {
            schema: FEATURE_META_SCHEMA.into(),
            library_version: LIBRARY_VERSION.into(),
            layout,
            dim: layout.dim(),
            manifest_sha256: None,
            inputs,
            skipped,
            run_config: cfg.clone(),
        },
    })
}

/// Trained model plus everything needed to audit how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub schema: String,
    pub schema_version: u32,
    pub library_version: String,
    pub task: Task,
    pub family: ModelFamily,
    pub layout: FeatureLayout,
    pub dim: usize,
    pub hyperparameters: HyperParams,
    pub averaging: AveragingPath,
    pub folds: FoldPlan,
    pub cv_report: EvalReport,
    pub grid: Vec<GridPoint>,
    pub model: AveragedModel,
    pub input_sha256: String,
    pub run_config: RunConfig,
}

impl ModelArtifact {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("schema").and_then(|s| s.as_str()) {
            Some(ARTIFACT_SCHEMA) => {}
            other => return Err(Error::InvalidConfig(format!("not a model artifact (schema {other:?})"))),
        }
        match v.get("schema_version").and_then(|s| s.as_u64()) {
            Some(n) if n == ARTIFACT_SCHEMA_VERSION as u64 => {}
            other => return Err(Error::InvalidConfig(format!("unsupported artifact version {other:?}"))),
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(std::str::from_utf8(&read_file(path)?).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    }
}

fn targets(table: &FeatureTable, task: Task) -> Result<Vec<f64>> {
    table
        .rows
        .iter()
        .map(|r| match task {
            Task::Classification => r
                .label
                .map(|l| l.sign())
                .ok_or_else(|| Error::TooFewSamples(format!("{} has no label", r.utt_id))),
            Task::Regression => r
                .mmse
                .ok_or_else(|| Error::TooFewSamples(format!("{} has no mmse", r.utt_id))),
        })
        .collect()
}

/// Stratified folds over the rows of `table`: by label for classification,
/// by target quartile for regression.
pub fn plan_folds(table: &FeatureTable, task: Task, k: usize, seed: u64) -> Result<FoldPlan> {
    let y = targets(table, task)?;
    let ids = table.rows.iter().map(|r| r.utt_id.clone());
    match task {
        Task::Classification => {
            let items: Vec<(String, i8)> = ids.zip(&y).map(|(id, &v)| (id, v as i8)).collect();
            if items.iter().all(|(_, s)| *s == items[0].1) {
                return Err(Error::SingleClass);
            }
            stratified_kfold_by(&items, k, seed, k)
        }
        Task::Regression => {
            let items: Vec<(String, usize)> = ids.zip(quartiles(&y)).collect();
            stratified_kfold_by(&items, k, seed, 1)
        }
    }
}

fn fold_indices(table: &FeatureTable, plan: &FoldPlan) -> Vec<FoldIndices> {
    let index: std::collections::HashMap<&str, usize> =
        table.rows.iter().enumerate().map(|(i, r)| (r.utt_id.as_str(), i)).collect();
    let map = |ids: &[String]| ids.iter().map(|id| index[id.as_str()]).collect::<Vec<_>>();
    plan.folds.iter().map(|f| (map(&f.train_ids), map(&f.dev_ids))).collect()
}

/// Grid search with k-fold CV, fold refits merged into one model.
pub fn train(
    table: &FeatureTable,
    layout: FeatureLayout,
    task: Task,
    family: ModelFamily,
    cfg: &RunConfig,
    input_sha256: String,
) -> Result<ModelArtifact> {
    family.check_task(task)?;
    if table.dim != layout.dim() {
        return Err(Error::LayoutMismatch(format!(
            "table has {} features, layout N={} C={} needs {}",
            table.dim,
            layout.n_formants,
            layout.dct_order,
            layout.dim()
        )));
    }
    let k = cfg.cv.k;
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    if table.rows.len() < 2 * k {
        return Err(Error::TooFewSamples(format!("{} rows for {k}-fold CV", table.rows.len())));
    }
    let mut table = table.clone();
    table.rows.sort_by(|a, b| a.utt_id.cmp(&b.utt_id));
    let y = targets(&table, task)?;
    let plan = plan_folds(&table, task, k, cfg.cv.seed)?;
    let folds = fold_indices(&table, &plan);
    let x: Vec<Vec<f64>> = table.rows.iter().map(|r| r.values.clone()).collect();
    let out = grid_search(&x, &y, task, family, &folds, &cfg.grid, cfg.cv.final_model)?;
    Ok(ModelArtifact {
        schema: ARTIFACT_SCHEMA.into(),
        schema_version: ARTIFACT_SCHEMA_VERSION,
        library_version: LIBRARY_VERSION.into(),
        task,
        family,
        layout,
        dim: layout.dim(),
        hyperparameters: out.best,
        averaging: out.model.path(),
        folds: plan,
        cv_report: out.report,
        grid: out.grid,
        model: out.model,
        input_sha256,
        run_config: cfg.clone(),
    })
}

/// Metrics of a trained artifact on `table`. The per-fold list is empty.
pub fn evaluate(artifact: &ModelArtifact, table: &FeatureTable, layout: FeatureLayout) -> Result<EvalReport> {
    if layout != artifact.layout || table.dim != artifact.dim {
        return Err(Error::LayoutMismatch(format!(
            "model expects N={} C={} ({} features), input has N={} C={} ({} features)",
            artifact.layout.n_formants,
            artifact.layout.dct_order,
            artifact.dim,
            layout.n_formants,
            layout.dct_order,
            table.dim
        )));
    }
    let y = targets(table, artifact.task)?;
    let x: Vec<Vec<f64>> = table.rows.iter().map(|r| r.values.clone()).collect();
    let scores = artifact.model.scores(&x)?;
    Ok(EvalReport {
        task: artifact.task,
        n: y.len(),
        summary: MetricSet::compute(artifact.task, &y, &scores)?,
        folds: Vec::new(),
    })
}
