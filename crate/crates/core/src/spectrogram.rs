// SPDX-License-Identifier: Apache-2.0

//! Low-frequency rhythm spectrograms: a fixed number of overlapping windows
//! over an envelope, each reduced to its (0, fmax] Hz magnitude spectrum and
//! normalized to a unit maximum.

use std::io::{Read, Write};

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::envelope::{EnvelopeKind, EnvelopeSeries};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectrogramConfig {
    pub window_s: f64,
    pub n_slices: usize,
    pub fmax_hz: f64,
    pub zero_pad_factor: usize,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_s: 5.0,
            n_slices: 100,
            fmax_hz: 10.0,
            zero_pad_factor: 4,
        }
    }
}

impl SpectrogramConfig {
    pub fn validate(&self, rate_hz: f64) -> Result<()> {
        if !(self.window_s > 0.0) {
            return Err(Error::InvalidConfig("window_s must be positive".into()));
        }
        if self.n_slices < 2 {
            return Err(Error::InvalidConfig("n_slices must be >= 2".into()));
        }
        if self.zero_pad_factor < 1 {
            return Err(Error::InvalidConfig("zero_pad_factor must be >= 1".into()));
        }
        if !(self.fmax_hz > 0.0 && self.fmax_hz < rate_hz / 2.0) {
            return Err(Error::InvalidConfig(format!(
                "fmax {} Hz must be below envelope Nyquist {} Hz",
                self.fmax_hz,
                rate_hz / 2.0
            )));
        }
        Ok(())
    }

    pub fn window_samples(&self, rate_hz: f64) -> usize {
        (self.window_s * rate_hz).round() as usize
    }
}

/// `n_slices` x K matrix of per-slice normalized LF magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct RhythmSpectrogram {
    magnitudes: Vec<Vec<f64>>,
    freq_axis_hz: Vec<f64>,
    slice_times_s: Vec<f64>,
    kind: EnvelopeKind,
}

impl RhythmSpectrogram {
    pub fn from_parts(
        magnitudes: Vec<Vec<f64>>,
        freq_axis_hz: Vec<f64>,
        slice_times_s: Vec<f64>,
        kind: EnvelopeKind,
    ) -> Result<Self> {
        if magnitudes.len() < 2 || slice_times_s.len() != magnitudes.len() {
            return Err(Error::MalformedCsv(format!(
                "{} rows with {} slice times",
                magnitudes.len(),
                slice_times_s.len()
            )));
        }
        if freq_axis_hz.is_empty() || freq_axis_hz.windows(2).any(|w| w[1] <= w[0]) || freq_axis_hz[0] <= 0.0 {
            return Err(Error::MalformedCsv("frequency axis must be positive and increasing".into()));
        }
        if let Some(row) = magnitudes.iter().find(|r| r.len() != freq_axis_hz.len()) {
            return Err(Error::LengthMismatch {
                expected: freq_axis_hz.len(),
                got: row.len(),
            });
        }
        if magnitudes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::MalformedCsv("non-finite magnitude".into()));
        }
        Ok(Self {
            magnitudes,
            freq_axis_hz,
            slice_times_s,
            kind,
        })
    }

    pub fn magnitudes(&self) -> &[Vec<f64>] {
        &self.magnitudes
    }

    pub fn freq_axis_hz(&self) -> &[f64] {
        &self.freq_axis_hz
    }

    pub fn slice_times_s(&self) -> &[f64] {
        &self.slice_times_s
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    pub fn n_slices(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn n_bins(&self) -> usize {
        self.freq_axis_hz.len()
    }

    /// Frequency of the largest bin in each slice (first bin on ties).
    pub fn slice_argmax_hz(&self) -> Vec<f64> {
        self.magnitudes
            .iter()
            .map(|row| self.freq_axis_hz[argmax(row)])
            .collect()
    }

    /// Header row of frequencies followed by one row per slice.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.freq_axis_hz.iter().map(|f| f.to_string()))?;
        for row in &self.magnitudes {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV written by [`write_csv`](Self::write_csv). Slice times
    /// are not stored in the file and come back as slice indices.
    pub fn read_csv<R: Read>(input: R, kind: EnvelopeKind) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(input);
        let mut rows = rdr.records();
        let parse_row = |rec: csv::StringRecord| -> Result<Vec<f64>> {
            rec.iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::MalformedCsv(format!("{s:?}: {e}")))
                })
                .collect()
        };
        let header = rows
            .next()
            .ok_or_else(|| Error::MalformedCsv("empty file".into()))?
            .map_err(|e| Error::MalformedCsv(e.to_string()))?;
        let freqs = parse_row(header)?;
        let mut mags = Vec::new();
        for rec in rows {
            mags.push(parse_row(rec.map_err(|e| Error::MalformedCsv(e.to_string()))?)?);
        }
        let times = (0..mags.len()).map(|i| i as f64).collect();
        Self::from_parts(mags, freqs, times, kind)
    }
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Window start indices `round(i * (len - window) / (n - 1))`.
pub fn segment_starts(env_len: usize, window: usize, n_slices: usize) -> Result<Vec<usize>> {
    if n_slices < 2 {
        return Err(Error::InvalidConfig("n_slices must be >= 2".into()));
    }
    if window == 0 || env_len < window {
        return Err(Error::TooShort {
            needed: window.max(1),
            got: env_len,
        });
    }
    let span = (env_len - window) as f64;
    let last = (n_slices - 1) as f64;
    Ok((0..n_slices)
        .map(|i| (i as f64 * span / last).round() as usize)
        .collect())
}

/// Frequencies `k * df` with `0 < k * df <= fmax`.
pub fn lf_axis(window: usize, rate_hz: f64, zero_pad_factor: usize, fmax_hz: f64) -> Vec<f64> {
    let n_fft = window * zero_pad_factor;
    let df = rate_hz / n_fft as f64;
    let k_max = ((fmax_hz / df) + 1e-9).floor() as usize;
    (1..=k_max.min(n_fft / 2)).map(|k| k as f64 * df).collect()
}

/// Reusable FFT plan and Hann window for one window length.
pub struct LfAnalyzer {
    window: usize,
    n_fft: usize,
    n_bins: usize,
    hann: Vec<f64>,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl LfAnalyzer {
    pub fn new(window: usize, rate_hz: f64, cfg: &SpectrogramConfig) -> Self {
        let n_fft = window * cfg.zero_pad_factor;
        let n_bins = lf_axis(window, rate_hz, cfg.zero_pad_factor, cfg.fmax_hz).len();
        // Symmetric Hann; a 1-sample window degenerates to a unit tap.
        let hann = if window == 1 {
            vec![1.0]
        } else {
            (0..window)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (window - 1) as f64).cos())
                .collect()
        };
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self {
            window,
            n_fft,
            n_bins,
            hann,
            fft,
        }
    }

    /// Magnitudes of bins 1..=K after mean removal and Hann weighting.
    pub fn magnitudes(&self, segment: &[f64]) -> Result<Vec<f64>> {
        if segment.len() != self.window {
            return Err(Error::LengthMismatch {
                expected: self.window,
                got: segment.len(),
            });
        }
        let mean = segment.iter().sum::<f64>() / segment.len() as f64;
        let scale = segment.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let spread = segment.iter().fold(0.0f64, |m, v| m.max((v - mean).abs()));
        // Rounding residue of a constant segment must not be normalized into structure.
        if spread <= 1e-12 * scale {
            return Ok(vec![0.0; self.n_bins]);
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.n_fft];
        for ((b, &v), &w) in buf.iter_mut().zip(segment).zip(&self.hann) {
            b.re = (v - mean) * w;
        }
        self.fft.process(&mut buf);
        Ok(buf[1..=self.n_bins].iter().map(|c| c.norm()).collect())
    }
}

/// Mean-removed, Hann-windowed, zero-padded magnitude spectrum of one
/// segment, restricted to `0 < f <= fmax`.
pub fn lf_spectrum(segment: &[f64], rate_hz: f64, cfg: &SpectrogramConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    cfg.validate(rate_hz)?;
    let window = cfg.window_samples(rate_hz);
    let analyzer = LfAnalyzer::new(window, rate_hz, cfg);
    let mags = analyzer.magnitudes(segment)?;
    Ok((lf_axis(window, rate_hz, cfg.zero_pad_factor, cfg.fmax_hz), mags))
}

pub fn rhythm_spectrogram(env: &EnvelopeSeries, cfg: &SpectrogramConfig) -> Result<RhythmSpectrogram> {
    let rate = env.rate_hz();
    cfg.validate(rate)?;
    let window = cfg.window_samples(rate);
    let starts = segment_starts(env.len(), window, cfg.n_slices)?;
    let analyzer = LfAnalyzer::new(window, rate, cfg);
    let values = env.values();
    let magnitudes = starts
        .iter()
        .map(|&s| {
            let mut row = analyzer.magnitudes(&values[s..s + window])?;
            let peak = row.iter().fold(0.0f64, |m, &v| m.max(v));
            if peak > 0.0 {
                for v in &mut row {
                    *v /= peak;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    let slice_times_s = starts
        .iter()
        .map(|&s| (s as f64 + window as f64 / 2.0) / rate)
        .collect();
    RhythmSpectrogram::from_parts(
        magnitudes,
        lf_axis(window, rate, cfg.zero_pad_factor, cfg.fmax_hz),
        slice_times_s,
        env.kind(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn env_from(f: impl Fn(f64) -> f64, secs: f64) -> EnvelopeSeries {
        let n = (secs * 100.0).round() as usize;
        EnvelopeSeries::new((0..n).map(|i| f(i as f64 / 100.0)).collect(), 100.0, EnvelopeKind::Am).unwrap()
    }

    #[test]
    fn starts_without_room() {
        assert_eq!(segment_starts(500, 500, 100).unwrap(), vec![0; 100]);
    }

    #[test]
    fn starts_unit_hop() {
        assert_eq!(segment_starts(599, 500, 100).unwrap(), (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn starts_formula() {
        let s = segment_starts(1500, 500, 100).unwrap();
        assert_eq!(s[50], 505);
        assert_eq!(s[0], 0);
        assert_eq!(s[99], 1000);
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn starts_too_short() {
        assert!(matches!(segment_starts(499, 500, 100), Err(Error::TooShort { .. })));
    }

    #[test]
    fn axis_resolution() {
        let axis = lf_axis(500, 100.0, 4, 10.0);
        assert_eq!(axis.len(), 200);
        assert!((axis[0] - 0.05).abs() < 1e-12);
        assert!((axis[199] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn constant_segment_is_silent() {
        let (_, m) = lf_spectrum(&[0.7; 500], 100.0, &SpectrogramConfig::default()).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn wrong_segment_length() {
        assert!(matches!(
            lf_spectrum(&[0.0; 499], 100.0, &SpectrogramConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn sinusoid_peak() {
        let seg: Vec<f64> = (0..500).map(|i| (2.0 * PI * 3.0 * i as f64 / 100.0).sin()).collect();
        let (f, m) = lf_spectrum(&seg, 100.0, &SpectrogramConfig::default()).unwrap();
        assert!((f[argmax(&m)] - 3.0).abs() <= 0.05);
    }

    #[test]
    fn two_tone_peaks() {
        let seg: Vec<f64> = (0..500)
            .map(|i| {
                let t = i as f64 / 100.0;
                (2.0 * PI * 3.0 * t).sin() + (2.0 * PI * 7.0 * t).sin()
            })
            .collect();
        let (f, m) = lf_spectrum(&seg, 100.0, &SpectrogramConfig::default()).unwrap();
        let local_max = |lo: f64, hi: f64| {
            let idx: Vec<usize> = (0..f.len()).filter(|&i| f[i] >= lo && f[i] <= hi).collect();
            let best = *idx.iter().max_by(|&&a, &&b| m[a].total_cmp(&m[b])).unwrap();
            (f[best], m[best])
        };
        let (f3, m3) = local_max(2.0, 4.0);
        let (f7, m7) = local_max(6.0, 8.0);
        assert!((f3 - 3.0).abs() <= 0.05 && (f7 - 7.0).abs() <= 0.05);
        assert!((m3 - m7).abs() / m3.max(m7) < 0.1);
    }

    #[test]
    fn stationary_modulator() {
        let env = env_from(|t| 0.6 + 0.3 * (2.0 * PI * 3.0 * t).sin(), 60.0);
        let s = rhythm_spectrogram(&env, &SpectrogramConfig::default()).unwrap();
        assert_eq!(s.n_slices(), 100);
        assert!(s.slice_argmax_hz().iter().all(|f| (f - 3.0).abs() <= 0.2));
    }

    #[test]
    fn modulator_switch() {
        let env = env_from(
            |t| {
                let f = if t < 30.0 { 2.0 } else { 6.0 };
                0.6 + 0.3 * (2.0 * PI * f * t).sin()
            },
            60.0,
        );
        let s = rhythm_spectrogram(&env, &SpectrogramConfig::default()).unwrap();
        let peaks = s.slice_argmax_hz();
        assert!((peaks[0] - 2.0).abs() <= 0.2);
        assert!((peaks[99] - 6.0).abs() <= 0.2);
        let first_high = peaks.iter().position(|&f| f > 4.0).unwrap();
        assert!(first_high.abs_diff(50) <= 10, "switch at slice {first_high}");
        assert!(peaks[first_high..].iter().all(|&f| f > 4.0));
    }

    #[test]
    fn too_short_envelope() {
        let env = env_from(|t| t, 4.99);
        assert!(matches!(
            rhythm_spectrogram(&env, &SpectrogramConfig::default()),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn csv_round_trip() {
        let env = env_from(|t| 0.5 + 0.2 * (2.0 * PI * 4.0 * t).sin() + 0.01 * t, 12.0);
        let s = rhythm_spectrogram(&env, &SpectrogramConfig::default()).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = RhythmSpectrogram::read_csv(buf.as_slice(), EnvelopeKind::Am).unwrap();
        assert_eq!(back.magnitudes(), s.magnitudes());
        assert_eq!(back.freq_axis_hz(), s.freq_axis_hz());
        assert!(RhythmSpectrogram::read_csv("1,2\n0.5,x\n".as_bytes(), EnvelopeKind::Am).is_err());
    }

    #[test]
    fn shape_is_duration_independent() {
        for secs in [5.01, 30.0, 600.0] {
            let env = env_from(|t| 1.0 + (t * 1.3).sin() * (t * 0.21).cos(), secs);
            let s = rhythm_spectrogram(&env, &SpectrogramConfig::default()).unwrap();
            assert_eq!(s.n_slices(), 100);
            assert!(s.freq_axis_hz().iter().all(|&f| f > 0.0 && f <= 10.0));
            for row in s.magnitudes() {
                let max = row.iter().cloned().fold(0.0, f64::max);
                assert!(max == 1.0 || row.iter().all(|&v| v == 0.0));
                assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn sub_hop_shift_moves_argmax_at_most_one_bin(shift in 0usize..3, f in 1.0f64..9.0, phase in 0.0f64..std::f64::consts::TAU) {
            // 80 s stationary envelope: hop between windows is ~7.5 samples.
            let n = 8000;
            let base: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * (2.0 * PI * f * i as f64 / 100.0 + phase).sin()).collect();
            let mut shifted = base.clone();
            shifted.rotate_right(shift);
            let cfg = SpectrogramConfig::default();
            let a = rhythm_spectrogram(&EnvelopeSeries::new(base, 100.0, EnvelopeKind::Am).unwrap(), &cfg).unwrap();
            let b = rhythm_spectrogram(&EnvelopeSeries::new(shifted, 100.0, EnvelopeKind::Am).unwrap(), &cfg).unwrap();
            for (ra, rb) in a.magnitudes().iter().zip(b.magnitudes()) {
                prop_assert!(argmax(ra).abs_diff(argmax(rb)) <= 1);
            }
        }
    }
}
