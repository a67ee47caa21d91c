// SPDX-License-Identifier: Apache-2.0

//! Audio loading, speaker-segment isolation and peak normalization.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_SAMPLE_RATE_HZ: u32 = 8000;

/// Mono PCM signal with amplitudes in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
    source_id: String,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32, source_id: impl Into<String>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate_hz < MIN_SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedFormat(format!(
                "sample rate {sample_rate_hz} Hz below {MIN_SAMPLE_RATE_HZ} Hz"
            )));
        }
        if let Some(bad) = samples.iter().find(|s| !s.is_finite() || s.abs() > 1.0) {
            return Err(Error::UnsupportedFormat(format!("sample {bad} outside [-1, 1]")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
            source_id: source_id.into(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// One timestamped turn of a conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub speaker: String,
}

/// Speaker turns sorted by start time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentList {
    entries: Vec<Segment>,
}

impl SegmentList {
    pub fn new(mut entries: Vec<Segment>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if !(e.start_s.is_finite() && e.end_s.is_finite()) || e.start_s < 0.0 || e.end_s <= e.start_s {
                return Err(Error::MalformedRow {
                    line: i + 2,
                    reason: format!("invalid segment {}..{}", e.start_s, e.end_s),
                });
            }
        }
        entries.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[Segment] {
        &self.entries
    }

    /// Parses the `start_s,end_s,speaker` CSV format.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["start_s", "end_s", "speaker"] {
            return Err(Error::MalformedCsv(format!(
                "expected header start_s,end_s,speaker, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (i, row) in rdr.deserialize::<Segment>().enumerate() {
            let seg = row.map_err(|e| Error::MalformedRow {
                line: i + 2,
                reason: e.to_string(),
            })?;
            entries.push(seg);
        }
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        Self::from_csv_reader(file)
    }
}

/// Loads a RIFF/WAVE file (PCM16 or float32), downmixing by channel mean.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let reader = hound::WavReader::open(path).map_err(wav_error)?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_wav(reader, source_id)
}

pub fn read_wav<R: Read>(reader: R, source_id: impl Into<String>) -> Result<AudioBuffer> {
    let reader = hound::WavReader::new(reader).map_err(wav_error)?;
    decode_wav(reader, source_id.into())
}

fn decode_wav<R: Read>(mut reader: hound::WavReader<R>, source_id: String) -> Result<AudioBuffer> {
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(Error::UnsupportedFormat("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_error)?,
        (fmt, bits) => {
            return Err(Error::UnsupportedFormat(format!("{fmt:?} {bits}-bit")));
        }
    };
    let frames = interleaved.len() / channels;
    if frames == 0 {
        return Err(Error::EmptyAudio);
    }
    let mono = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioBuffer::new(mono, spec.sample_rate, source_id)
}

fn wav_error(e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::Io(io),
        other => Error::UnsupportedFormat(other.to_string()),
    }
}

/// Quantizes to 16-bit mono PCM.
pub fn write_wav_pcm16(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<()> {
    let spec = pcm16_spec(audio.sample_rate_hz);
    let mut writer = hound::WavWriter::create(path, spec).map_err(wav_error)?;
    for &s in audio.samples() {
        writer.write_sample(quantize_pcm16(s)).map_err(wav_error)?;
    }
    writer.finalize().map_err(wav_error)
}

/// In-memory variant of [`write_wav_pcm16`].
pub fn encode_wav_pcm16(audio: &AudioBuffer) -> Result<Vec<u8>> {
    let mut cursor = std::io::Cursor::new(Vec::new());
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, pcm16_spec(audio.sample_rate_hz)).map_err(wav_error)?;
        for &s in audio.samples() {
            writer.write_sample(quantize_pcm16(s)).map_err(wav_error)?;
        }
        writer.finalize().map_err(wav_error)?;
    }
    Ok(cursor.into_inner())
}

fn pcm16_spec(sample_rate: u32) -> hound::WavSpec {
    hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    }
}

fn quantize_pcm16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Concatenates, in temporal order, the sample ranges of every segment
/// spoken by `speaker`. Boundaries are `round(t * rate)`.
pub fn extract_speaker_segments(audio: &AudioBuffer, segments: &SegmentList, speaker: &str) -> Result<AudioBuffer> {
    let rate = audio.sample_rate_hz as f64;
    let len = audio.len();
    let mut out = Vec::new();
    let mut matched = false;
    for seg in segments.entries().iter().filter(|s| s.speaker == speaker) {
        matched = true;
        let start = (seg.start_s * rate).round() as usize;
        let end = (seg.end_s * rate).round() as usize;
        if end > len {
            return Err(Error::SegmentOutOfRange {
                start_s: seg.start_s,
                end_s: seg.end_s,
                duration_s: audio.duration_s(),
            });
        }
        out.extend_from_slice(&audio.samples[start..end]);
    }
    if !matched {
        return Err(Error::NoMatchingSegments(speaker.to_string()));
    }
    if out.is_empty() {
        return Err(Error::EmptyAudio);
    }
    AudioBuffer::new(out, audio.sample_rate_hz, audio.source_id.clone())
}

/// Scales the signal so that its maximum absolute value is exactly 1.
pub fn normalize_peak(audio: &AudioBuffer) -> Result<AudioBuffer> {
    let peak = audio.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak == 0.0 {
        return Err(Error::DegenerateSignal);
    }
    let samples = if peak == 1.0 {
        audio.samples.clone()
    } else {
        audio
            .samples
            .iter()
            .map(|&s| {
                // Division (not multiplication by 1/peak) keeps the peak at exactly +/-1.
                (s / peak).clamp(-1.0, 1.0)
            })
            .collect()
    };
    Ok(AudioBuffer {
        samples,
        sample_rate_hz: audio.sample_rate_hz,
        source_id: audio.source_id.clone(),
    })
}
