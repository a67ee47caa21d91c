// SPDX-License-Identifier: Apache-2.0

//! AM and FM envelopes of a speech signal.
//!
//! The AM envelope is the magnitude of the analytic signal, smoothed with a
//! centred moving average and decimated to the envelope rate. The FM
//! envelope is an F0 contour from a normalized cross-correlation tracker
//! with dynamic-programming candidate selection, median-smoothed inside
//! voiced runs. Unvoiced frames stay at exactly 0.

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_io::AudioBuffer;

/// Lowest envelope rate that keeps 0-10 Hz below Nyquist with margin.
pub const MIN_ENVELOPE_RATE_HZ: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeKind {
    Am,
    Fm,
}

impl EnvelopeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvelopeKind::Am => "am",
            EnvelopeKind::Fm => "fm",
        }
    }
}

/// Uniformly sampled envelope. AM values are normalized amplitude, FM values
/// are Hz with 0 marking unvoiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeSeries {
    values: Vec<f64>,
    rate_hz: f64,
    kind: EnvelopeKind,
}

impl EnvelopeSeries {
    pub fn new(values: Vec<f64>, rate_hz: f64, kind: EnvelopeKind) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::TooShort { needed: 1, got: 0 });
        }
        if !(rate_hz >= MIN_ENVELOPE_RATE_HZ) {
            return Err(Error::InvalidConfig(format!(
                "envelope rate {rate_hz} Hz below {MIN_ENVELOPE_RATE_HZ} Hz"
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidConfig("envelope values must be finite and non-negative".into()));
        }
        Ok(Self { values, rate_hz, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn kind(&self) -> EnvelopeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }

    /// `t_s,value` CSV, one row per envelope sample.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            let t = i as f64 / self.rate_hz;
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmConfig {
    pub target_rate_hz: f64,
    /// Length of the centred moving average, seconds.
    pub smoothing_s: f64,
}

impl Default for AmConfig {
    fn default() -> Self {
        Self {
            target_rate_hz: 100.0,
            smoothing_s: 0.02,
        }
    }
}

/// Pitch tracker parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct F0Config {
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    pub frame_s: f64,
    pub hop_s: f64,
    /// Frames whose best correlation peak is below this are unvoiced.
    pub voicing_threshold: f64,
    /// Median window (frames) applied inside voiced runs of the FM envelope.
    pub median_window: usize,
    /// Frames more than this many dB below the loudest frame are unvoiced.
    pub silence_db: f64,
}

impl Default for F0Config {
    fn default() -> Self {
        Self {
            f0_min_hz: 60.0,
            f0_max_hz: 400.0,
            frame_s: 0.025,
            hop_s: 0.01,
            voicing_threshold: 0.3,
            median_window: 5,
            silence_db: 40.0,
        }
    }
}

impl F0Config {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = sample_rate_hz as f64 / 2.0;
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz && self.f0_max_hz < nyquist) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < f0_min ({}) < f0_max ({}) < {nyquist}",
                self.f0_min_hz, self.f0_max_hz
            )));
        }
        if !(self.hop_s > 0.0 && self.hop_s <= self.frame_s) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < hop_s ({}) <= frame_s ({})",
                self.hop_s, self.frame_s
            )));
        }
        if 1.0 / self.hop_s < MIN_ENVELOPE_RATE_HZ {
            return Err(Error::InvalidConfig(format!("hop_s {} gives a rate below 25 Hz", self.hop_s)));
        }
        if !(self.voicing_threshold > 0.0 && self.voicing_threshold < 1.0) {
            return Err(Error::InvalidConfig("voicing_threshold must lie in (0, 1)".into()));
        }
        if !(self.silence_db > 0.0) {
            return Err(Error::InvalidConfig("silence_db must be positive".into()));
        }
        if self.median_window == 0 {
            return Err(Error::InvalidConfig("median_window must be >= 1".into()));
        }
        Ok(())
    }

    fn frame_samples(&self, rate: u32) -> usize {
        ((self.frame_s * rate as f64).round() as usize).max(1)
    }

    fn hop_samples(&self, rate: u32) -> usize {
        ((self.hop_s * rate as f64).round() as usize).max(1)
    }
}

/// Magnitude of the analytic signal, computed with one full-length FFT.
pub fn analytic_magnitude(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let mut planner = FftPlanner::<f64>::new();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    // One-sided spectrum: keep DC (and Nyquist for even n), double positives.
    let half = n / 2;
    for (k, c) in buf.iter_mut().enumerate() {
        let gain = if k == 0 || (n.is_multiple_of(2) && k == half) {
            1.0
        } else if k < n.div_ceil(2) {
            2.0
        } else {
            0.0
        };
        *c *= gain;
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.norm() * scale).collect()
}

/// Centred moving average of odd length `width`; the window shrinks
/// symmetrically-truncated at the edges.
pub fn centered_moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in x {
        acc += v;
        prefix.push(acc);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

pub fn am_envelope(audio: &AudioBuffer, cfg: &AmConfig) -> Result<EnvelopeSeries> {
    if cfg.target_rate_hz < MIN_ENVELOPE_RATE_HZ {
        return Err(Error::InvalidConfig(format!(
            "AM target rate {} Hz below {MIN_ENVELOPE_RATE_HZ} Hz",
            cfg.target_rate_hz
        )));
    }
    let x = audio.samples();
    if x.iter().all(|&s| s == 0.0) {
        return Err(Error::DegenerateSignal);
    }
    let rate = audio.sample_rate_hz() as f64;
    let width = ((cfg.smoothing_s * rate).round() as usize).max(1) | 1;
    let out_len = (x.len() as f64 * cfg.target_rate_hz / rate).floor() as usize;
    if x.len() < 2 * width || out_len < 2 {
        return Err(Error::TooShort {
            needed: (2 * width).max((2.0 * rate / cfg.target_rate_hz).ceil() as usize),
            got: x.len(),
        });
    }
    let magnitude = analytic_magnitude(x);
    let smoothed = centered_moving_average(&magnitude, width);
    let step = rate / cfg.target_rate_hz;
    let values = (0..out_len)
        .map(|j| {
            let idx = ((j as f64 * step).round() as usize).min(smoothed.len() - 1);
            smoothed[idx].max(0.0)
        })
        .collect();
    EnvelopeSeries::new(values, cfg.target_rate_hz, EnvelopeKind::Am)
}

// Dynamic-programming costs, modelled on the usual NCCF tracker weights.
const LAG_WEIGHT: f64 = 0.3;
const FREQ_WEIGHT: f64 = 0.2;
const VOICING_SWITCH_COST: f64 = 0.3;
const MAX_CANDIDATES: usize = 8;
const ENERGY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Candidate {
    f0_hz: f64,
    cost: f64,
}

struct FrameAnalysis {
    candidates: Vec<Candidate>,
    unvoiced_cost: f64,
}

/// Frame-wise F0 with 0 for unvoiced frames: `floor(len / hop)` values,
/// frame `t` centred on sample `t * hop`.
pub fn estimate_f0(audio: &AudioBuffer, cfg: &F0Config) -> Result<EnvelopeSeries> {
    let rate = audio.sample_rate_hz();
    cfg.validate(rate)?;
    let x = audio.samples();
    let frame = cfg.frame_samples(rate);
    let hop = cfg.hop_samples(rate);
    if x.len() < frame {
        return Err(Error::TooShort { needed: frame, got: x.len() });
    }
    let rate_f = rate as f64;
    // Frame t is centred on sample t * hop; samples outside the signal are zero.
    let n_frames = x.len() / hop;
    let lag_min = ((rate_f / cfg.f0_max_hz).floor() as usize).max(1);
    let lag_max = (rate_f / cfg.f0_min_hz).ceil() as usize;
    let lead = frame / 2;
    let mut padded = vec![0.0; lead + x.len() + frame + lag_max + 1];
    padded[lead..lead + x.len()].copy_from_slice(x);

    let energies: Vec<f64> = (0..n_frames)
        .into_par_iter()
        .map(|t| padded[t * hop..t * hop + frame].iter().map(|v| v * v).sum())
        .collect();
    let loudest = energies.iter().copied().fold(0.0, f64::max);
    let floor = (loudest * 10f64.powf(-cfg.silence_db / 10.0)).max(ENERGY_FLOOR);

    let frames: Vec<FrameAnalysis> = (0..n_frames)
        .into_par_iter()
        .map(|t| analyze_frame(&padded, t * hop, frame, lag_min, lag_max, rate_f, floor, cfg))
        .collect();

    let values = viterbi(&frames);
    EnvelopeSeries::new(values, rate_f / hop as f64, EnvelopeKind::Fm)
}

#[allow(clippy::too_many_arguments)]
fn analyze_frame(
    x: &[f64],
    start: usize,
    width: usize,
    lag_min: usize,
    lag_max: usize,
    rate: f64,
    energy_floor: f64,
    cfg: &F0Config,
) -> FrameAnalysis {
    // Correlation reaches past the frame by up to lag_max; missing samples are zero.
    let span = width + lag_max + 1;
    let mut seg = vec![0.0; span];
    let avail = x.len().saturating_sub(start).min(span);
    seg[..avail].copy_from_slice(&x[start..start + avail]);

    let e0: f64 = seg[..width].iter().map(|v| v * v).sum();
    let mut nccf = vec![0.0; lag_max + 2];
    if e0 > energy_floor {
        let mut ek: f64 = seg[lag_min..lag_min + width].iter().map(|v| v * v).sum();
        for k in lag_min..=lag_max + 1 {
            if k > lag_min {
                let out = seg[k - 1];
                let inn = seg.get(k + width - 1).copied().unwrap_or(0.0);
                ek = (ek - out * out + inn * inn).max(0.0);
            }
            if k + width > span {
                break;
            }
            let denom = (e0 * ek).sqrt();
            if denom > ENERGY_FLOOR {
                let dot: f64 = seg[..width].iter().zip(&seg[k..k + width]).map(|(a, b)| a * b).sum();
                nccf[k] = dot / denom;
            }
        }
    }

    let mut peaks: Vec<(f64, f64)> = Vec::new(); // (refined lag, peak value)
    for k in lag_min.max(1)..=lag_max {
        let (l, c, r) = (nccf[k - 1], nccf[k], nccf[k + 1]);
        let interior = k > lag_min && k < lag_max;
        if interior && c > l && c >= r && c >= cfg.voicing_threshold {
            let denom = l - 2.0 * c + r;
            let (shift, value) = if denom < 0.0 {
                let d = 0.5 * (l - r) / denom;
                (d, c - 0.25 * (l - r) * d)
            } else {
                (0.0, c)
            };
            peaks.push((k as f64 + shift, value.min(1.0)));
        }
    }
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    peaks.truncate(MAX_CANDIDATES);

    let best = peaks.first().map_or(0.0, |p| p.1);
    let candidates = peaks
        .iter()
        .map(|&(lag, c)| Candidate {
            f0_hz: (rate / lag).clamp(cfg.f0_min_hz, cfg.f0_max_hz),
            cost: 1.0 - c * (1.0 - LAG_WEIGHT * lag / lag_max as f64),
        })
        .collect();
    FrameAnalysis {
        candidates,
        unvoiced_cost: best,
    }
}

/// Minimum-cost path through per-frame candidates. State 0 of every frame
/// is "unvoiced".
fn viterbi(frames: &[FrameAnalysis]) -> Vec<f64> {
    let state_f0 = |f: &FrameAnalysis, s: usize| if s == 0 { 0.0 } else { f.candidates[s - 1].f0_hz };
    let local = |f: &FrameAnalysis, s: usize| if s == 0 { f.unvoiced_cost } else { f.candidates[s - 1].cost };
    let transition = |prev: f64, cur: f64| match (prev > 0.0, cur > 0.0) {
        (false, false) => 0.0,
        (true, true) => FREQ_WEIGHT * (cur / prev).ln().abs(),
        _ => VOICING_SWITCH_COST,
    };

    let mut back: Vec<Vec<usize>> = Vec::with_capacity(frames.len());
    let mut cost: Vec<f64> = (0..=frames[0].candidates.len()).map(|s| local(&frames[0], s)).collect();
    back.push(vec![0; cost.len()]);
    for t in 1..frames.len() {
        let (prev, cur) = (&frames[t - 1], &frames[t]);
        let mut next_cost = Vec::with_capacity(cur.candidates.len() + 1);
        let mut ptr = Vec::with_capacity(cur.candidates.len() + 1);
        for s in 0..=cur.candidates.len() {
            let f = state_f0(cur, s);
            let (arg, best) = cost
                .iter()
                .enumerate()
                .map(|(p, &c)| (p, c + transition(state_f0(prev, p), f)))
                .fold((0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
            next_cost.push(best + local(cur, s));
            ptr.push(arg);
        }
        cost = next_cost;
        back.push(ptr);
    }
    let mut state = cost
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc })
        .0;
    let mut out = vec![0.0; frames.len()];
    for t in (0..frames.len()).rev() {
        out[t] = state_f0(&frames[t], state);
        state = back[t][state];
    }
    out
}

/// Median filter restricted to runs of non-zero values. Zeros are copied
/// through unchanged; windows never straddle a break.
pub fn median_filter_voiced(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    let mut out = values.to_vec();
    let mut i = 0;
    while i < values.len() {
        if values[i] == 0.0 {
            i += 1;
            continue;
        }
        let start = i;
        while i < values.len() && values[i] != 0.0 {
            i += 1;
        }
        let run = &values[start..i];
        let mut scratch = Vec::with_capacity(window);
        for (j, slot) in out[start..i].iter_mut().enumerate() {
            let lo = j.saturating_sub(half);
            let hi = (j + half + 1).min(run.len());
            scratch.clear();
            scratch.extend_from_slice(&run[lo..hi]);
            scratch.sort_by(f64::total_cmp);
            let m = scratch.len();
            *slot = if m % 2 == 1 {
                scratch[m / 2]
            } else {
                0.5 * (scratch[m / 2 - 1] + scratch[m / 2])
            };
        }
    }
    out
}

pub fn fm_envelope(audio: &AudioBuffer, cfg: &F0Config) -> Result<EnvelopeSeries> {
    let f0 = estimate_f0(audio, cfg)?;
    let smoothed = median_filter_voiced(f0.values(), cfg.median_window);
    EnvelopeSeries::new(smoothed, f0.rate_hz(), EnvelopeKind::Fm)
}
