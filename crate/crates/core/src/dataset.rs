// SPDX-License-Identifier: Apache-2.0

//! Corpus manifests and stratified k-fold planning.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 5] = ["utt_id", "wav_path", "segments_path", "label", "mmse"];

/// Diagnostic class. `Ad` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "HC")]
    Hc,
    #[serde(rename = "AD")]
    Ad,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Hc => "HC",
            Label::Ad => "AD",
        }
    }

    /// +1 for AD, -1 for HC.
    pub fn sign(self) -> f64 {
        match self {
            Label::Ad => 1.0,
            Label::Hc => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Self {
        if v >= 0.0 {
            Label::Ad
        } else {
            Label::Hc
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "HC" => Ok(Label::Hc),
            "AD" => Ok(Label::Ad),
            _ => Err(Error::UnknownLabel(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub utt_id: String,
    pub wav_path: PathBuf,
    pub segments_path: Option<PathBuf>,
    pub label: Option<Label>,
    pub mmse: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut seen = HashSet::new();
        for r in &rows {
            if !seen.insert(r.utt_id.as_str()) {
                return Err(Error::DuplicateId(r.utt_id.clone()));
            }
            if let Some(m) = r.mmse {
                if m > 30 {
                    return Err(Error::MalformedRow {
                        line: 0,
                        reason: format!("mmse {m} outside 0..=30 for {}", r.utt_id),
                    });
                }
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses manifest CSV; relative paths are resolved against `base_dir`.
    pub fn from_csv_reader<R: Read>(reader: R, base_dir: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != MANIFEST_HEADER {
            return Err(Error::MalformedCsv(format!(
                "expected header {}, got {}",
                MANIFEST_HEADER.join(","),
                header.join(",")
            )));
        }
        let resolve = |p: &str| {
            let p = Path::new(p);
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let mut rows = Vec::new();
        let mut seen = HashSet::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| Error::MalformedRow { line, reason: e.to_string() })?;
            if rec.len() != MANIFEST_HEADER.len() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected 5 fields, got {}", rec.len()),
                });
            }
            let utt_id = rec[0].to_string();
            if utt_id.is_empty() || rec[1].is_empty() {
                return Err(Error::MalformedRow {
                    line,
                    reason: "utt_id and wav_path are required".into(),
                });
            }
            if !seen.insert(utt_id.clone()) {
                return Err(Error::DuplicateId(utt_id));
            }
            let label = match &rec[3] {
                "" => None,
                s => Some(s.parse::<Label>()?),
            };
            let mmse = match &rec[4] {
                "" => None,
                s => match s.parse::<u8>() {
                    Ok(v) if v <= 30 => Some(v),
                    _ => {
                        return Err(Error::MalformedRow {
                            line,
                            reason: format!("mmse {s:?} is not an integer in 0..=30"),
                        })
                    }
                },
            };
            rows.push(ManifestRow {
                utt_id,
                wav_path: resolve(&rec[1]),
                segments_path: (!rec[2].is_empty()).then(|| resolve(&rec[2])),
                label,
                mmse,
            });
        }
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
            _ => Error::Io(e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_csv_reader(file, base)
    }

    /// Writes the manifest; paths under `base_dir` are written relative to it.
    pub fn write_csv<W: std::io::Write>(&self, out: W, base_dir: &Path) -> Result<()> {
        let rel = |p: &Path| {
            p.strip_prefix(base_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .into_owned()
        };
        let mut w = csv::Writer::from_writer(out);
        w.write_record(MANIFEST_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.utt_id.clone(),
                rel(&r.wav_path),
                r.segments_path.as_deref().map(rel).unwrap_or_default(),
                r.label.map(|l| l.to_string()).unwrap_or_default(),
                r.mmse.map(|m| m.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How dev folds are balanced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    Label,
    MmseQuartile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub train_ids: Vec<String>,
    pub dev_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Quartile index (0..4) of each value by rank; ties broken by position.
pub fn quartiles(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n = values.len();
    let mut q = vec![0; n];
    for (rank, &i) in order.iter().enumerate() {
        q[i] = rank * 4 / n;
    }
    q
}

/// Stratified k-fold over `(id, stratum)` pairs.
///
/// Ids are sorted, grouped by stratum, shuffled per stratum with a seeded
/// ChaCha8 stream, then dealt round-robin to dev folds with one counter that
/// carries across strata. Every stratum must hold at least `min_per_stratum`
/// items.
pub fn stratified_kfold_by<S: Ord + fmt::Debug>(
    items: &[(String, S)],
    k: usize,
    seed: u64,
    min_per_stratum: usize,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k must be >= 2, got {k}")));
    }
    if items.len() < k {
        return Err(Error::TooFewSamples(format!("{} items for {k} folds", items.len())));
    }
    let mut seen = HashSet::new();
    let mut strata: BTreeMap<&S, Vec<&str>> = BTreeMap::new();
    for (id, s) in items {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId(id.clone()));
        }
        strata.entry(s).or_default().push(id);
    }
    for (s, ids) in &strata {
        if ids.len() < min_per_stratum {
            return Err(Error::TooFewSamples(format!(
                "stratum {s:?} has {} items, need {min_per_stratum}",
                ids.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dev: Vec<Vec<String>> = vec![Vec::new(); k];
    let mut counter = 0usize;
    for ids in strata.values_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            dev[counter % k].push(id.to_string());
            counter += 1;
        }
    }
    let mut all: Vec<String> = items.iter().map(|(id, _)| id.clone()).collect();
    all.sort_unstable();
    let folds = dev
        .into_iter()
        .map(|mut dev_ids| {
            dev_ids.sort_unstable();
            let dev_set: HashSet<&str> = dev_ids.iter().map(String::as_str).collect();
            let train_ids = all.iter().filter(|id| !dev_set.contains(id.as_str())).cloned().collect();
            Fold { train_ids, dev_ids }
        })
        .collect();
    Ok(FoldPlan { k, seed, folds })
}

pub fn stratified_kfold(manifest: &Manifest, k: usize, seed: u64, stratify: Stratify) -> Result<FoldPlan> {
    match stratify {
        Stratify::Label => {
            let items = manifest
                .rows()
                .iter()
                .map(|r| {
                    r.label
                        .map(|l| (r.utt_id.clone(), l))
                        .ok_or_else(|| Error::TooFewSamples(format!("{} has no label", r.utt_id)))
                })
                .collect::<Result<Vec<_>>>()?;
            stratified_kfold_by(&items, k, seed, k)
        }
        Stratify::MmseQuartile => {
            let mmse = manifest
                .rows()
                .iter()
                .map(|r| {
                    r.mmse
                        .map(f64::from)
                        .ok_or_else(|| Error::TooFewSamples(format!("{} has no mmse", r.utt_id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let q = quartiles(&mmse);
            let items: Vec<(String, usize)> =
                manifest.rows().iter().zip(q).map(|(r, q)| (r.utt_id.clone(), q)).collect();
            stratified_kfold_by(&items, k, seed, 1)
        }
    }
}
