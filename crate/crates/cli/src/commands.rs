// SPDX-License-Identifier: Apache-2.0

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::json;

use rfa_core::envelope::{am_envelope, fm_envelope, EnvelopeKind};
use rfa_core::models::{ModelFamily, Task};
use rfa_core::pipeline::{
    self, extract_features, load_prepared, sha256_hex, FeatureMeta, ModelArtifact, LIBRARY_VERSION,
};
use rfa_core::signal_io::write_wav_pcm16;
use rfa_core::spectrogram::{rhythm_spectrogram, RhythmSpectrogram};
use rfa_core::synth::{self, AmTone, F0Pattern, Gaps, PulseTrain, SynthSpec};
use rfa_core::{Error, FeatureTable, Manifest, RunConfig};

use crate::render;
use crate::{EvalArgs, FeaturesArgs, KindArg, ModelArg, RenderArgs, SpectrogramArgs, SynthCommand, TaskArg, TrainArgs};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Encoding(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "Usage",
            CliError::Encoding(_) => "Encoding",
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(s) | CliError::Encoding(s) => f.write_str(s),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

pub enum Outcome {
    Done,
    /// Finished, but some inputs were skipped.
    Partial(String),
}

type CliResult = Result<Outcome, CliError>;

pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    Ok(match seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn read_input(path: &Path) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()).into());
    }
    Ok(std::fs::read(path)?)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "utt".into())
}

pub fn spectrogram(cfg: &RunConfig, a: SpectrogramArgs) -> CliResult {
    let speaker = a.speaker.as_deref().unwrap_or(&cfg.speaker);
    let audio = load_prepared(&a.wav, a.segments.as_deref(), speaker)?;
    let wav_sha = sha256_hex(&read_input(&a.wav)?);
    let seg_sha = a.segments.as_deref().map(read_input).transpose()?.map(|b| sha256_hex(&b));
    let kinds: &[EnvelopeKind] = match a.kind {
        KindArg::Am => &[EnvelopeKind::Am],
        KindArg::Fm => &[EnvelopeKind::Fm],
        KindArg::Both => &[EnvelopeKind::Am, EnvelopeKind::Fm],
    };
    std::fs::create_dir_all(&a.out_dir)?;
    let utt = stem(&a.wav);
    for &kind in kinds {
        let env = match kind {
            EnvelopeKind::Am => am_envelope(&audio, &cfg.am)?,
            EnvelopeKind::Fm => fm_envelope(&audio, &cfg.f0)?,
        };
        let spec = rhythm_spectrogram(&env, &cfg.spectrogram)?;
        let path = a.out_dir.join(format!("{utt}_{}.csv", kind.as_str()));
        let mut w = create(&path)?;
        spec.write_csv(&mut w)?;
        w.flush()?;
        write_json(
            &with_suffix(&path, ".meta.json"),
            &json!({
                "schema": "rfa.spectrogram_meta",
                "library_version": LIBRARY_VERSION,
                "kind": kind,
                "wav_sha256": wav_sha,
                "segments_sha256": seg_sha,
                "speaker": a.segments.as_ref().map(|_| speaker),
                "run_config": cfg,
            }),
        )?;
        if a.envelopes {
            let mut w = create(&a.out_dir.join(format!("{utt}_{}_envelope.csv", kind.as_str())))?;
            env.write_csv(&mut w)?;
            w.flush()?;
        }
        log::info!("wrote {}", path.display());
    }
    Ok(Outcome::Done)
}

pub fn render(_cfg: &RunConfig, a: RenderArgs) -> CliResult {
    let bytes = read_input(&a.input)?;
    let kind = if stem(&a.input).ends_with("_fm") {
        EnvelopeKind::Fm
    } else {
        EnvelopeKind::Am
    };
    let spec = RhythmSpectrogram::read_csv(bytes.as_slice(), kind)?;
    let text = [
        ("Software", format!("rfa {LIBRARY_VERSION}")),
        ("Source-SHA256", sha256_hex(&bytes)),
    ];
    let mut w = create(&a.out)?;
    render::write_png(&spec, &text, &mut w).map_err(|e| CliError::Encoding(e.to_string()))?;
    w.flush()?;
    Ok(Outcome::Done)
}

pub fn features(mut cfg: RunConfig, a: FeaturesArgs) -> CliResult {
    if let Some(n) = a.n_formants {
        cfg.features.n_formants = n;
    }
    if let Some(c) = a.dct_order {
        cfg.features.dct_order = c;
    }
    let manifest = Manifest::load(&a.manifest)?;
    let mut ex = extract_features(&manifest, &cfg)?;
    ex.meta.manifest_sha256 = Some(sha256_hex(&read_input(&a.manifest)?));
    let mut w = create(&a.out)?;
    ex.table.write_csv(&mut w)?;
    w.flush()?;
    write_json(&FeatureMeta::sidecar_path(&a.out), &ex.meta)?;
    if ex.meta.skipped.is_empty() {
        Ok(Outcome::Done)
    } else {
        let ids: Vec<&str> = ex.meta.skipped.iter().map(|s| s.utt_id.as_str()).collect();
        Ok(Outcome::Partial(format!(
            "skipped={} of={} ids={}",
            ids.len(),
            manifest.len(),
            ids.join(",")
        )))
    }
}

/// Feature table plus the layout and extraction config recorded next to it.
struct LoadedFeatures {
    table: FeatureTable,
    sha256: String,
    meta: Option<FeatureMeta>,
}

fn load_features(path: &Path) -> Result<LoadedFeatures, CliError> {
    let bytes = read_input(path)?;
    let table = FeatureTable::read_csv(bytes.as_slice())?;
    let sidecar = FeatureMeta::sidecar_path(path);
    let meta = if sidecar.exists() { Some(FeatureMeta::load(&sidecar)?) } else { None };
    if let Some(m) = &meta {
        if m.dim != table.dim {
            return Err(Error::LayoutMismatch(format!(
                "{} declares {} features, file has {}",
                sidecar.display(),
                m.dim,
                table.dim
            ))
            .into());
        }
    }
    Ok(LoadedFeatures {
        table,
        sha256: sha256_hex(&bytes),
        meta,
    })
}

pub fn train(mut cfg: RunConfig, a: TrainArgs) -> CliResult {
    let task = match a.task {
        TaskArg::Clf => Task::Classification,
        TaskArg::Reg => Task::Regression,
    };
    let family = match a.model {
        ModelArg::Svm => ModelFamily::Svm,
        ModelArg::Svr => ModelFamily::Svr,
        ModelArg::Dt => ModelFamily::Tree,
    };
    family.check_task(task)?;
    if let Some(k) = a.k {
        cfg.cv.k = k;
    }
    let f = load_features(&a.features)?;
    let layout = match &f.meta {
        Some(m) => {
            let src = &m.run_config;
            cfg.speaker = src.speaker.clone();
            cfg.am = src.am.clone();
            cfg.f0 = src.f0.clone();
            cfg.spectrogram = src.spectrogram.clone();
            cfg.features = src.features.clone();
            m.layout
        }
        None => cfg.features.layout()?,
    };
    let artifact = pipeline::train(&f.table, layout, task, family, &cfg, f.sha256)?;
    let mut w = create(&a.out)?;
    w.write_all(artifact.to_json()?.as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    let report_path = a.report.unwrap_or_else(|| with_suffix(&a.out, ".report.json"));
    write_json(
        &report_path,
        &json!({
            "schema": "rfa.cv_report",
            "library_version": LIBRARY_VERSION,
            "input_sha256": artifact.input_sha256,
            "hyperparameters": artifact.hyperparameters,
            "averaging": artifact.averaging,
            "report": artifact.cv_report,
            "run_config": cfg,
        }),
    )?;
    println!("best {}", serde_json::to_string(&artifact.hyperparameters)?);
    print!("{}", artifact.cv_report.to_table());
    Ok(Outcome::Done)
}

pub fn eval(cfg: &RunConfig, a: EvalArgs) -> CliResult {
    let model_bytes = read_input(&a.model)?;
    let artifact = ModelArtifact::from_json(
        std::str::from_utf8(&model_bytes).map_err(|e| Error::InvalidConfig(e.to_string()))?,
    )?;
    let f = load_features(&a.features)?;
    // Without a sidecar only the dimension can be checked.
    let layout = f.meta.as_ref().map_or(artifact.layout, |m| m.layout);
    let report = pipeline::evaluate(&artifact, &f.table, layout)?;
    if let Some(path) = &a.report {
        write_json(
            path,
            &json!({
                "schema": "rfa.eval_report",
                "library_version": LIBRARY_VERSION,
                "model_sha256": sha256_hex(&model_bytes),
                "features_sha256": f.sha256,
                "report": report,
                "run_config": cfg,
            }),
        )?;
    }
    print!("{}", report.to_table());
    Ok(Outcome::Done)
}

pub fn synth(cfg: &RunConfig, s: SynthCommand) -> CliResult {
    let (spec, out) = match s {
        SynthCommand::Corpus { out_dir, n_per_class } => {
            let mut spec = cfg.corpus.clone();
            if let Some(n) = n_per_class {
                spec.n_per_class = n;
            }
            let m = synth::gen_two_class_corpus(&spec, &out_dir)?;
            log::info!("wrote {} utterances to {}", m.len(), out_dir.display());
            return Ok(Outcome::Done);
        }
        SynthCommand::AmTone {
            mod_hz,
            carrier_hz,
            depth,
            duration_s,
            sample_rate_hz,
            out,
        } => (
            SynthSpec::AmTone(AmTone {
                carrier_hz,
                mod_hz,
                depth,
                duration_s,
                sample_rate_hz,
            }),
            out,
        ),
        SynthCommand::PulseTrain {
            f0_hz,
            vibrato_hz,
            vibrato_depth_hz,
            gap_every_s,
            gap_length_s,
            duration_s,
            sample_rate_hz,
            out,
        } => {
            let pattern = match vibrato_hz {
                Some(v) => F0Pattern::Vibrato {
                    base_hz: f0_hz,
                    vibrato_hz: v,
                    vibrato_depth_hz,
                },
                None => F0Pattern::Constant { hz: f0_hz },
            };
            (
                SynthSpec::PulseTrain(PulseTrain {
                    pattern,
                    duration_s,
                    sample_rate_hz,
                    gaps: gap_every_s.map(|every_s| Gaps {
                        every_s,
                        length_s: gap_length_s,
                    }),
                }),
                out,
            )
        }
        SynthCommand::FromJson { spec, out } => {
            let spec: SynthSpec = serde_json::from_slice(&read_input(&spec)?)
                .map_err(|e| Error::InvalidSpec(e.to_string()))?;
            (spec, out)
        }
    };
    let audio = synth::generate(&spec)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_wav_pcm16(&out, &audio)?;
    Ok(Outcome::Done)
}
