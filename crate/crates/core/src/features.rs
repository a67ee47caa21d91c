// SPDX-License-Identifier: Apache-2.0

//! Handcrafted rhythm features: per-slice rhythm formants (LF spectral
//! peaks), the variance of their trajectories, and the low-order 2D-DCT
//! corner of each spectrogram.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::dct::dct2_prefix;
use crate::envelope::EnvelopeKind;
use crate::error::{Error, Result};
use crate::spectrogram::RhythmSpectrogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeakPicking {
    /// Minimum distance between kept peaks, Hz.
    pub min_separation_hz: f64,
    /// Minimum topographic prominence on the max-normalized slice.
    pub min_prominence: f64,
}

impl Default for PeakPicking {
    fn default() -> Self {
        Self {
            min_separation_hz: 0.3,
            min_prominence: 0.05,
        }
    }
}

/// All strict local maxima (plateaus report their left-middle sample).
fn local_maxima(mags: &[f64]) -> Vec<usize> {
    let n = mags.len();
    let mut out = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if mags[i] > mags[i - 1] {
            let mut j = i;
            while j + 1 < n && mags[j + 1] == mags[i] {
                j += 1;
            }
            if j + 1 < n && mags[j + 1] < mags[i] {
                out.push((i + j) / 2);
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    out
}

/// Height of a peak above the higher of its two bases. A base is the lowest
/// point between the peak and the nearest higher sample (or the edge).
fn prominence(mags: &[f64], peak: usize) -> f64 {
    let h = mags[peak];
    let mut left_min = h;
    for &v in mags[..peak].iter().rev() {
        if v > h {
            break;
        }
        left_min = left_min.min(v);
    }
    let mut right_min = h;
    for &v in &mags[peak + 1..] {
        if v > h {
            break;
        }
        right_min = right_min.min(v);
    }
    h - left_min.max(right_min)
}

/// Picks `n` rhythm formants from one spectrum slice, returned ascending.
///
/// Peaks with enough prominence are taken largest first, subject to the
/// separation constraint. Shortfalls are filled in order by weaker local
/// maxima, then by the largest remaining non-zero bins, and finally by
/// repeating the global maximum.
pub fn pick_formants(mags: &[f64], freqs: &[f64], n: usize, cfg: &PeakPicking) -> Result<Vec<f64>> {
    if mags.is_empty() {
        return Err(Error::EmptySlice);
    }
    if mags.len() != freqs.len() {
        return Err(Error::LengthMismatch {
            expected: freqs.len(),
            got: mags.len(),
        });
    }
    let by_height = |idx: &mut Vec<usize>| idx.sort_by(|&a, &b| mags[b].total_cmp(&mags[a]).then(a.cmp(&b)));
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let separated = |chosen: &[usize], i: usize| {
        chosen
            .iter()
            .all(|&c| (freqs[c] - freqs[i]).abs() >= cfg.min_separation_hz - 1e-9)
    };
    let take = |pool: Vec<usize>, chosen: &mut Vec<usize>| {
        for i in pool {
            if chosen.len() == n {
                break;
            }
            if !chosen.contains(&i) && separated(chosen, i) {
                chosen.push(i);
            }
        }
    };

    let maxima = local_maxima(mags);
    let (mut strong, mut weak): (Vec<usize>, Vec<usize>) = maxima
        .into_iter()
        .partition(|&p| prominence(mags, p) >= cfg.min_prominence);
    by_height(&mut strong);
    by_height(&mut weak);
    take(strong, &mut chosen);
    take(weak, &mut chosen);
    if chosen.len() < n {
        let mut rest: Vec<usize> = (0..mags.len()).filter(|&i| mags[i] > 0.0).collect();
        by_height(&mut rest);
        take(rest, &mut chosen);
    }
    let top = crate::spectrogram::argmax(mags);
    chosen.resize(n, top);

    let mut out: Vec<f64> = chosen.into_iter().map(|i| freqs[i]).collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Slice-wise rhythm formants: `freqs_hz[slice][k]` is the k-th lowest.
#[derive(Debug, Clone, PartialEq)]
pub struct FormantTrajectories {
    pub freqs_hz: Vec<Vec<f64>>,
    pub n_formants: usize,
    pub kind: EnvelopeKind,
}

impl FormantTrajectories {
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.freqs_hz.iter().map(|row| row[k]).collect()
    }
}

pub fn formant_trajectories(spec: &RhythmSpectrogram, n: usize, cfg: &PeakPicking) -> Result<FormantTrajectories> {
    let freqs_hz = spec
        .magnitudes()
        .iter()
        .map(|row| pick_formants(row, spec.freq_axis_hz(), n, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(FormantTrajectories {
        freqs_hz,
        n_formants: n,
        kind: spec.kind(),
    })
}

/// Population variance (Hz^2) of every trajectory, via Welford updates.
pub fn trajectory_variance(traj: &FormantTrajectories) -> Result<Vec<f64>> {
    let slices = traj.freqs_hz.len();
    if slices < 2 {
        return Err(Error::TooFewSlices(slices));
    }
    let mut mean = vec![0.0; traj.n_formants];
    let mut m2 = vec![0.0; traj.n_formants];
    for (t, row) in traj.freqs_hz.iter().enumerate() {
        let count = (t + 1) as f64;
        for k in 0..traj.n_formants {
            let delta = row[k] - mean[k];
            mean[k] += delta / count;
            m2[k] += delta * (row[k] - mean[k]);
        }
    }
    Ok(m2.into_iter().map(|v| v / slices as f64).collect())
}

/// Row-major `c x c` top-left corner of the orthonormal 2D DCT-II of the
/// magnitude matrix (time axis first, then frequency).
pub fn dct2_block(spec: &RhythmSpectrogram, c: usize) -> Result<Vec<f64>> {
    dct2_block_raw(spec.magnitudes(), c)
}

pub fn dct2_block_raw(m: &[Vec<f64>], c: usize) -> Result<Vec<f64>> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if c > rows.min(cols) {
        return Err(Error::OrderTooLarge { order: c, rows, cols });
    }
    if c == 0 {
        return Ok(Vec::new());
    }
    Ok(dct2_prefix(m, c, c).into_iter().flatten().collect())
}

/// Ordered block sizes of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub n_formants: usize,
    pub dct_order: usize,
}

impl FeatureLayout {
    pub fn new(n_formants: usize, dct_order: usize) -> Result<Self> {
        if n_formants == 0 && dct_order == 0 {
            return Err(Error::InvalidConfig("feature vector would be empty (N = C = 0)".into()));
        }
        Ok(Self { n_formants, dct_order })
    }

    pub fn dim(&self) -> usize {
        2 * self.n_formants + 2 * self.dct_order * self.dct_order
    }

    pub fn blocks(&self) -> [(&'static str, usize); 4] {
        let c2 = self.dct_order * self.dct_order;
        [
            ("am_var", self.n_formants),
            ("fm_var", self.n_formants),
            ("am_dct", c2),
            ("fm_dct", c2),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: FeatureLayout,
}

/// `[am_var(N), fm_var(N), am_dct(C^2), fm_dct(C^2)]`. `n = 0` drops the
/// variance blocks and `c = 0` drops the DCT blocks.
pub fn combined_features(
    am: &RhythmSpectrogram,
    fm: &RhythmSpectrogram,
    n: usize,
    c: usize,
    picking: &PeakPicking,
) -> Result<FeatureVector> {
    let layout = FeatureLayout::new(n, c)?;
    let mut values = Vec::with_capacity(layout.dim());
    if n > 0 {
        values.extend(trajectory_variance(&formant_trajectories(am, n, picking)?)?);
        values.extend(trajectory_variance(&formant_trajectories(fm, n, picking)?)?);
    }
    values.extend(dct2_block(am, c)?);
    values.extend(dct2_block(fm, c)?);
    debug_assert_eq!(values.len(), layout.dim());
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite feature value".into()));
    }
    Ok(FeatureVector { values, layout })
}

/// One row of the feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub utt_id: String,
    pub label: Option<Label>,
    pub mmse: Option<f64>,
    pub values: Vec<f64>,
}

/// Feature CSV: `utt_id,label,mmse,f_0..f_{D-1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureTable {
    pub dim: usize,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn header(dim: usize) -> Vec<String> {
        let mut h = vec!["utt_id".to_string(), "label".into(), "mmse".into()];
        h.extend((0..dim).map(|i| format!("f_{i}")));
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(self.dim))?;
        for r in &self.rows {
            let mut rec = vec![
                r.utt_id.clone(),
                r.label.map(|l| l.to_string()).unwrap_or_default(),
                r.mmse.map(|m| m.to_string()).unwrap_or_default(),
            ];
            rec.extend(r.values.iter().map(|v| v.to_string()));
            w.write_record(rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header.len() < 3 {
            return Err(Error::MalformedCsv("feature header needs utt_id,label,mmse".into()));
        }
        let dim = header.len() - 3;
        if header != Self::header(dim) {
            return Err(Error::MalformedCsv(format!("unexpected feature header {}", header.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::MalformedRow {
                        line,
                        reason: format!("not a number: {s:?}"),
                    })
            };
            let label = match &rec[1] {
                "" => None,
                s => Some(s.parse::<Label>()?),
            };
            let mmse = match &rec[2] {
                "" => None,
                s => Some(num(s)?),
            };
            let values = rec.iter().skip(3).map(num).collect::<Result<Vec<_>>>()?;
            rows.push(FeatureRow {
                utt_id: rec[0].to_string(),
                label,
                mmse,
                values,
            });
        }
        Ok(Self { dim, rows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis() -> Vec<f64> {
        (1..=200).map(|k| k as f64 * 0.05).collect()
    }

    fn spec_from(rows: Vec<Vec<f64>>, freqs: Vec<f64>) -> RhythmSpectrogram {
        let t = (0..rows.len()).map(|i| i as f64).collect();
        RhythmSpectrogram::from_parts(rows, freqs, t, EnvelopeKind::Am).unwrap()
    }

    #[test]
    fn single_triangle() {
        let f = axis();
        let m: Vec<f64> = f.iter().map(|&x| (1.0 - (x - 2.0).abs()).max(0.0)).collect();
        let p = pick_formants(&m, &f, 1, &PeakPicking::default()).unwrap();
        assert!((p[0] - 2.0).abs() <= 0.05);
    }

    #[test]
    fn six_bumps() {
        let f = axis();
        let m: Vec<f64> = f
            .iter()
            .map(|&x| (1..=6).map(|c| (-(x - c as f64).powi(2) / (2.0 * 0.1f64.powi(2))).exp()).sum())
            .collect();
        let p = pick_formants(&m, &f, 6, &PeakPicking::default()).unwrap();
        for (k, v) in p.iter().enumerate() {
            assert!((v - (k + 1) as f64).abs() <= 0.1, "{p:?}");
        }
    }

    #[test]
    fn zero_slice_repeats_first_bin() {
        let f = axis();
        let p = pick_formants(&vec![0.0; 200], &f, 6, &PeakPicking::default()).unwrap();
        assert_eq!(p, vec![0.05; 6]);
    }

    #[test]
    fn empty_slice() {
        assert!(matches!(pick_formants(&[], &[], 2, &PeakPicking::default()), Err(Error::EmptySlice)));
    }

    #[test]
    fn fallback_fills_with_separated_bins() {
        // One peak only; the rest come from the largest remaining bins.
        let f = axis();
        let m: Vec<f64> = f.iter().map(|&x| (-(x - 4.0).powi(2)).exp()).collect();
        let p = pick_formants(&m, &f, 3, &PeakPicking::default()).unwrap();
        assert_eq!(p.len(), 3);
        assert!(p.iter().any(|&v| (v - 4.0).abs() < 1e-9));
        for w in p.windows(2) {
            assert!(w[1] - w[0] >= 0.3 - 1e-9);
        }
    }

    #[test]
    fn prominence_filters_ripple() {
        let f = axis();
        let m: Vec<f64> = f
            .iter()
            .map(|&x| (-(x - 3.0).powi(2) * 4.0).exp() + 0.01 * (x * 40.0).sin().abs())
            .collect();
        let strong: Vec<usize> = local_maxima(&m).into_iter().filter(|&p| prominence(&m, p) >= 0.05).collect();
        assert_eq!(strong.len(), 1);
        assert!((f[strong[0]] - 3.0).abs() <= 0.05);
    }

    #[test]
    fn argmax_trajectory_for_n1() {
        let f = axis();
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|t| f.iter().map(|&x| (-(x - 1.0 - t as f64 * 0.05).powi(2)).exp()).collect())
            .collect();
        let s = spec_from(rows, f);
        let traj = formant_trajectories(&s, 1, &PeakPicking::default()).unwrap();
        assert_eq!(traj.column(0), s.slice_argmax_hz());
    }

    #[test]
    fn variance_cases() {
        let constant = FormantTrajectories {
            freqs_hz: vec![vec![2.0]; 100],
            n_formants: 1,
            kind: EnvelopeKind::Am,
        };
        assert_eq!(trajectory_variance(&constant).unwrap(), vec![0.0]);
        let two = FormantTrajectories {
            freqs_hz: (0..100).map(|i| vec![if i % 2 == 0 { 1.5 } else { 4.0 }]).collect(),
            n_formants: 1,
            kind: EnvelopeKind::Am,
        };
        let v = trajectory_variance(&two).unwrap()[0];
        assert!((v - ((1.5f64 - 4.0) / 2.0).powi(2)).abs() < 1e-12);
        let one = FormantTrajectories {
            freqs_hz: vec![vec![1.0]],
            n_formants: 1,
            kind: EnvelopeKind::Am,
        };
        assert!(matches!(trajectory_variance(&one), Err(Error::TooFewSlices(1))));
    }

    fn two_pass_variance(x: &[f64]) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64
    }

    proptest! {
        #[test]
        fn variance_matches_two_pass(col in prop::collection::vec(0.05f64..10.0, 2..200)) {
            let traj = FormantTrajectories {
                freqs_hz: col.iter().map(|&v| vec![v]).collect(),
                n_formants: 1,
                kind: EnvelopeKind::Fm,
            };
            let got = trajectory_variance(&traj).unwrap()[0];
            let want = two_pass_variance(&col);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300) || (got - want).abs() < 1e-15);
        }

        #[test]
        fn picks_are_sorted_in_band(mags in prop::collection::vec(0.0f64..1.0, 200), n in 1usize..8) {
            let f = axis();
            let p = pick_formants(&mags, &f, n, &PeakPicking::default()).unwrap();
            prop_assert_eq!(p.len(), n);
            prop_assert!(p.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(p.iter().all(|&v| v > 0.0 && v <= 10.0));
        }

        #[test]
        fn dct_block_is_linear(
            a in prop::collection::vec(-1.0f64..1.0, 60),
            b in prop::collection::vec(-1.0f64..1.0, 60),
            alpha in -3.0f64..3.0,
            beta in -3.0f64..3.0,
        ) {
            let shape = |v: &[f64]| v.chunks(10).map(<[f64]>::to_vec).collect::<Vec<_>>();
            let (ma, mb) = (shape(&a), shape(&b));
            let mix: Vec<Vec<f64>> = ma.iter().zip(&mb)
                .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| alpha * x + beta * y).collect())
                .collect();
            let ba = dct2_block_raw(&ma, 4).unwrap();
            let bb = dct2_block_raw(&mb, 4).unwrap();
            let bm = dct2_block_raw(&mix, 4).unwrap();
            for i in 0..16 {
                prop_assert!((bm[i] - (alpha * ba[i] + beta * bb[i])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn constant_matrix_dct() {
        let m = vec![vec![0.7; 20]; 12];
        let block = dct2_block_raw(&m, 4).unwrap();
        assert!((block[0] - 0.7 * (12.0f64 * 20.0).sqrt()).abs() < 1e-9);
        assert!(block[1..].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn dct_order_bounds() {
        let m = vec![vec![0.0; 5]; 100];
        assert!(matches!(dct2_block_raw(&m, 6), Err(Error::OrderTooLarge { .. })));
        assert_eq!(dct2_block_raw(&m, 3).unwrap().len(), 9);
    }

    #[test]
    fn layout_dimensions() {
        let f = axis();
        let rows: Vec<Vec<f64>> = (0..100)
            .map(|t| f.iter().map(|&x| ((x * (1.0 + t as f64 * 0.01)).sin() + 1.0) / 2.0).collect())
            .collect();
        let s = spec_from(rows, f);
        let p = PeakPicking::default();
        for (n, c, d) in [(6, 3, 30), (6, 2, 20), (6, 4, 44), (6, 0, 12), (0, 3, 18)] {
            let v = combined_features(&s, &s, n, c, &p).unwrap();
            assert_eq!(v.values.len(), d);
            assert_eq!(v.layout.dim(), d);
        }
        assert!(combined_features(&s, &s, 0, 0, &p).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let t = FeatureTable {
            dim: 3,
            rows: vec![
                FeatureRow {
                    utt_id: "a".into(),
                    label: Some(Label::Ad),
                    mmse: None,
                    values: vec![0.1, -2.5e-7, 3.0],
                },
                FeatureRow {
                    utt_id: "b".into(),
                    label: None,
                    mmse: Some(28.0),
                    values: vec![1.0, 2.0, 1.0 / 3.0],
                },
            ],
        };
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("utt_id,label,mmse,f_0,f_1,f_2\n"));
        assert!(text.contains("\na,AD,,"));
        assert_eq!(FeatureTable::read_csv(buf.as_slice()).unwrap(), t);
    }
}
