// SPDX-License-Identifier: Apache-2.0

//! Synthetic signals with known modulation content.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Label, Manifest, ManifestRow};
use crate::error::{Error, Result};
use crate::signal_io::{normalize_peak, write_wav_pcm16, AudioBuffer};

/// Sinusoidal carrier with a raised-sine amplitude modulator:
/// `[(1 - depth) + depth * (1 + sin(2 pi mod t)) / 2] * sin(2 pi carrier t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmTone {
    pub carrier_hz: f64,
    pub mod_hz: f64,
    pub depth: f64,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum F0Pattern {
    Constant { hz: f64 },
    /// `(hz, seconds)` steps, repeated cyclically.
    Steps { steps: Vec<(f64, f64)> },
    Vibrato {
        base_hz: f64,
        vibrato_hz: f64,
        vibrato_depth_hz: f64,
    },
}

impl F0Pattern {
    pub fn f0_at(&self, t: f64) -> f64 {
        match self {
            F0Pattern::Constant { hz } => *hz,
            F0Pattern::Steps { steps } => {
                let period: f64 = steps.iter().map(|s| s.1).sum();
                let mut r = t.rem_euclid(period);
                for &(hz, d) in steps {
                    if r < d {
                        return hz;
                    }
                    r -= d;
                }
                steps.last().map_or(0.0, |s| s.0)
            }
            F0Pattern::Vibrato {
                base_hz,
                vibrato_hz,
                vibrato_depth_hz,
            } => base_hz + vibrato_depth_hz * (2.0 * PI * vibrato_hz * t).sin(),
        }
    }

    fn range(&self) -> (f64, f64) {
        match self {
            F0Pattern::Constant { hz } => (*hz, *hz),
            F0Pattern::Steps { steps } => steps
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| (lo.min(s.0), hi.max(s.0))),
            F0Pattern::Vibrato {
                base_hz,
                vibrato_depth_hz,
                ..
            } => (base_hz - vibrato_depth_hz.abs(), base_hz + vibrato_depth_hz.abs()),
        }
    }
}

/// Silence of `length_s` closing every `every_s` period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaps {
    pub every_s: f64,
    pub length_s: f64,
}

impl Gaps {
    pub fn is_silent(&self, t: f64) -> bool {
        t.rem_euclid(self.every_s) >= self.every_s - self.length_s
    }
}

/// Resonator-filtered impulse train following an F0 pattern.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub pattern: F0Pattern,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub gaps: Option<Gaps>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthSpec {
    AmTone(AmTone),
    PulseTrain(PulseTrain),
}

pub fn generate(spec: &SynthSpec) -> Result<AudioBuffer> {
    match spec {
        SynthSpec::AmTone(s) => gen_am_tone(s),
        SynthSpec::PulseTrain(s) => gen_pulse_train(s),
    }
}

fn check_common(duration_s: f64, rate: u32) -> Result<()> {
    if !(duration_s > 0.0 && duration_s.is_finite()) {
        return Err(Error::InvalidSpec(format!("duration {duration_s} s must be positive")));
    }
    if rate < crate::signal_io::MIN_SAMPLE_RATE_HZ {
        return Err(Error::InvalidSpec(format!("sample rate {rate} Hz below 8000 Hz")));
    }
    Ok(())
}

pub fn gen_am_tone(spec: &AmTone) -> Result<AudioBuffer> {
    check_common(spec.duration_s, spec.sample_rate_hz)?;
    if !(spec.mod_hz > 0.0 && spec.mod_hz < 10.0) {
        return Err(Error::InvalidSpec(format!("mod_hz {} outside (0, 10)", spec.mod_hz)));
    }
    if !(0.0..=1.0).contains(&spec.depth) {
        return Err(Error::InvalidSpec(format!("depth {} outside [0, 1]", spec.depth)));
    }
    let rate = spec.sample_rate_hz as f64;
    if !(spec.carrier_hz > 0.0 && spec.carrier_hz < rate / 2.0) {
        return Err(Error::InvalidSpec(format!("carrier {} Hz not below Nyquist", spec.carrier_hz)));
    }
    let n = (spec.duration_s * rate).round() as usize;
    let d = spec.depth;
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / rate;
            let env = (1.0 - d) + d * (1.0 + (2.0 * PI * spec.mod_hz * t).sin()) / 2.0;
            env * (2.0 * PI * spec.carrier_hz * t).sin()
        })
        .collect();
    normalize_peak(&AudioBuffer::new(x, spec.sample_rate_hz, "am_tone")?)
}

// Single formant-like resonance applied to the pulse train.
const RESONANCE_HZ: f64 = 600.0;
const RESONANCE_BW_HZ: f64 = 150.0;

pub fn gen_pulse_train(spec: &PulseTrain) -> Result<AudioBuffer> {
    check_common(spec.duration_s, spec.sample_rate_hz)?;
    let (lo, hi) = spec.pattern.range();
    let rate = spec.sample_rate_hz as f64;
    if !(lo > 0.0 && hi < rate / 4.0) {
        return Err(Error::InvalidSpec(format!("F0 range {lo}..{hi} Hz invalid for {rate} Hz")));
    }
    if let F0Pattern::Steps { steps } = &spec.pattern {
        if steps.is_empty() || steps.iter().any(|s| !(s.1 > 0.0)) {
            return Err(Error::InvalidSpec("steps need positive durations".into()));
        }
    }
    if let Some(g) = spec.gaps {
        if !(g.every_s > 0.0 && g.length_s > 0.0 && g.length_s < g.every_s) {
            return Err(Error::InvalidSpec("gaps need 0 < length_s < every_s".into()));
        }
    }
    let n = (spec.duration_s * rate).round() as usize;
    let mut excitation = vec![0.0; n + 1];
    let mut phase = 0.0;
    for i in 0..n {
        let t = i as f64 / rate;
        let step = spec.pattern.f0_at(t) / rate;
        let next = phase + step;
        if next >= 1.0 {
            // Pulse falls between samples i and i+1; split it linearly.
            let frac = (1.0 - phase) / step;
            let silent = spec.gaps.is_some_and(|g| g.is_silent(t));
            if !silent {
                excitation[i] += 1.0 - frac;
                excitation[i + 1] += frac;
            }
            phase = next - 1.0;
        } else {
            phase = next;
        }
    }
    excitation.truncate(n);

    let r = (-PI * RESONANCE_BW_HZ / rate).exp();
    let a1 = 2.0 * r * (2.0 * PI * RESONANCE_HZ / rate).cos();
    let a2 = -r * r;
    let (mut y1, mut y2) = (0.0, 0.0);
    let y: Vec<f64> = excitation
        .iter()
        .map(|&e| {
            let y0 = e + a1 * y1 + a2 * y2;
            y2 = y1;
            y1 = y0;
            y0
        })
        .collect();
    let peak = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak == 0.0 {
        return Err(Error::InvalidSpec("pulse train produced no pulses".into()));
    }
    AudioBuffer::new(y.iter().map(|v| v / peak).collect(), spec.sample_rate_hz, "pulse_train")
}

/// Two-class modulation corpus: AD tones are modulated near 2 Hz, HC tones
/// near 5 Hz. The synthetic MMSE target is affine in the true modulation rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_per_class: usize,
    pub seed: u64,
    pub duration_s: f64,
    pub sample_rate_hz: u32,
    pub ad_mod_hz: f64,
    pub hc_mod_hz: f64,
    pub jitter_hz: f64,
    pub depth: f64,
    pub mmse_slope: f64,
    pub mmse_intercept: f64,
    pub mmse_noise_sd: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            n_per_class: 20,
            seed: 0,
            duration_s: 10.0,
            sample_rate_hz: 16000,
            ad_mod_hz: 2.0,
            hc_mod_hz: 5.0,
            jitter_hz: 0.2,
            depth: 0.8,
            mmse_slope: 4.0,
            mmse_intercept: 4.0,
            mmse_noise_sd: 0.5,
        }
    }
}

/// Per-file seed derived from the corpus seed and the utterance id.
pub fn derive_seed(seed: u64, utt_id: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(utt_id.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 digest has 32 bytes"))
}

/// One generated utterance of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub utt_id: String,
    pub label: Label,
    pub mod_hz: f64,
    pub mmse: u8,
    pub audio: AudioBuffer,
}

pub fn corpus_items(spec: &CorpusSpec) -> Result<Vec<CorpusItem>> {
    if spec.n_per_class < 5 {
        return Err(Error::InvalidSpec(format!("n_per_class {} < 5", spec.n_per_class)));
    }
    let noise = Normal::new(0.0, spec.mmse_noise_sd.max(0.0))
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut items = Vec::with_capacity(2 * spec.n_per_class);
    for (label, centre) in [(Label::Ad, spec.ad_mod_hz), (Label::Hc, spec.hc_mod_hz)] {
        for i in 0..spec.n_per_class {
            let utt_id = format!("{}_{i:03}", label.as_str().to_ascii_lowercase());
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &utt_id));
            let mod_hz = centre + rng.random_range(-spec.jitter_hz..=spec.jitter_hz);
            let carrier_hz = rng.random_range(140.0..260.0);
            let mmse = (spec.mmse_slope * mod_hz + spec.mmse_intercept + noise.sample(&mut rng))
                .round()
                .clamp(0.0, 30.0) as u8;
            let audio = gen_am_tone(&AmTone {
                carrier_hz,
                mod_hz,
                depth: spec.depth,
                duration_s: spec.duration_s,
                sample_rate_hz: spec.sample_rate_hz,
            })?;
            items.push(CorpusItem {
                utt_id,
                label,
                mod_hz,
                mmse,
                audio,
            });
        }
    }
    Ok(items)
}

/// Writes `wav/<utt_id>.wav` files and `manifest.csv` under `out_dir`.
pub fn gen_two_class_corpus(spec: &CorpusSpec, out_dir: &Path) -> Result<Manifest> {
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir)?;
    let mut rows = Vec::new();
    for item in corpus_items(spec)? {
        let wav_path = wav_dir.join(format!("{}.wav", item.utt_id));
        write_wav_pcm16(&wav_path, &item.audio)?;
        rows.push(ManifestRow {
            utt_id: item.utt_id,
            wav_path,
            segments_path: None,
            label: Some(item.label),
            mmse: Some(item.mmse),
        });
    }
    let manifest = Manifest::new(rows)?;
    let file = std::fs::File::create(out_dir.join("manifest.csv"))?;
    manifest.write_csv(file, out_dir)?;
    Ok(manifest)
}
