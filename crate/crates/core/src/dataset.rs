//! Quadruple datasets on disk: 4-column TSV loading/saving, deterministic
//! splitting and summary statistics.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{FilterScope, KgError, RawQuadruple, TemporalKg, Timestamp};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{}line {line}: {message}", path_prefix(.path))]
    Parse { path: Option<PathBuf>, line: usize, message: String },
    #[error("split ratios must be positive and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("dataset of {0} quadruple(s) is too small to give non-empty held-out splits whose entities and relations all appear in train")]
    ClosureUnsatisfiable(usize),
    #[error(transparent)]
    Kg(#[from] KgError),
}

fn path_prefix(path: &Option<PathBuf>) -> String {
    path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default()
}

/// Train/valid/test proportions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.9, valid: 0.05, test: 0.05 }
    }
}

impl SplitRatios {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, DatasetError> {
        let ratios = Self { train, valid, test };
        ratios.validate()?;
        Ok(ratios)
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let all = [self.train, self.valid, self.test];
        let sum: f64 = all.iter().sum();
        if all.iter().any(|r| !r.is_finite() || *r <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DatasetError::BadRatios(all));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataSource {
    /// Pre-split train/valid/test files.
    Files { train: PathBuf, valid: PathBuf, test: PathBuf },
    /// One file split deterministically at load time.
    Single {
        path: PathBuf,
        ratios: SplitRatios,
        seed: u64,
        /// Chronological split: facts before this date go to train.
        #[serde(default)]
        split_by_time: Option<Timestamp>,
    },
}

/// Where a dataset lives and how to read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub source: DataSource,
    #[serde(default = "default_date_format")]
    pub date_format: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

fn default_delimiter() -> char {
    '\t'
}

impl DatasetManifest {
    /// `dir/train.tsv`, `dir/valid.tsv`, `dir/test.tsv`.
    pub fn directory(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self::with_source(DataSource::Files {
            train: dir.join("train.tsv"),
            valid: dir.join("valid.tsv"),
            test: dir.join("test.tsv"),
        })
    }

    pub fn single(path: impl Into<PathBuf>, ratios: SplitRatios, seed: u64) -> Self {
        Self::with_source(DataSource::Single { path: path.into(), ratios, seed, split_by_time: None })
    }

    pub fn with_source(source: DataSource) -> Self {
        Self { source, date_format: default_date_format(), delimiter: default_delimiter() }
    }

    /// Loads the splits and builds the indexed graph.
    pub fn load(&self, scope: FilterScope) -> Result<TemporalKg, DatasetError> {
        let (train, valid, test) = match &self.source {
            DataSource::Files { train, valid, test } => {
                (load_tsv(train, self)?, load_tsv(valid, self)?, load_tsv(test, self)?)
            }
            DataSource::Single { path, ratios, seed, split_by_time } => {
                let quads = load_tsv(path, self)?;
                let outcome = match split_by_time {
                    Some(cut) => split_chronological(&quads, *cut, *ratios)?,
                    None => split(&quads, *ratios, *seed)?,
                };
                if outcome.moved_to_train > 0 {
                    log::info!("moved {} held-out quadruple(s) to train for vocabulary closure", outcome.moved_to_train);
                }
                (outcome.train, outcome.valid, outcome.test)
            }
        };
        Ok(TemporalKg::from_splits(&train, &valid, &test, scope)?)
    }
}

/// Parses 4-column quadruple text. `#` lines and blank lines are skipped.
pub fn parse_tsv(text: &str, manifest: &DatasetManifest) -> Result<Vec<RawQuadruple>, DatasetError> {
    let mut quads = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Parse { path: None, line: i + 1, message };
        let fields: Vec<&str> = line.split(manifest.delimiter).collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, got {}", fields.len())));
        }
        let time = Timestamp::parse_with_format(fields[3], &manifest.date_format).map_err(|e| err(e.to_string()))?;
        quads.push(RawQuadruple::new(fields[0], fields[1], fields[2], time));
    }
    Ok(quads)
}

pub fn load_tsv(path: impl AsRef<Path>, manifest: &DatasetManifest) -> Result<Vec<RawQuadruple>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.to_path_buf(), source })?;
    parse_tsv(&text, manifest).map_err(|e| match e {
        DatasetError::Parse { line, message, .. } => DatasetError::Parse { path: Some(path.to_path_buf()), line, message },
        other => other,
    })
}

pub fn save_tsv(path: impl AsRef<Path>, quads: &[RawQuadruple]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for q in quads {
        writeln!(out, "{}\t{}\t{}\t{}", q.head, q.relation, q.tail, q.time).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitOutcome {
    pub train: Vec<RawQuadruple>,
    pub valid: Vec<RawQuadruple>,
    pub test: Vec<RawQuadruple>,
    /// Held-out facts moved to train because they mention an entity or
    /// relation absent from train.
    pub moved_to_train: usize,
}

fn dedup(quads: &[RawQuadruple]) -> Vec<RawQuadruple> {
    let mut seen = HashSet::new();
    quads.iter().filter(|q| seen.insert(*q)).cloned().collect()
}

/// Seeded random split. Sizes are `round(n·valid)` and `round(n·test)` with
/// the remainder in train, before closure adjustment.
pub fn split(quads: &[RawQuadruple], ratios: SplitRatios, seed: u64) -> Result<SplitOutcome, DatasetError> {
    ratios.validate()?;
    let quads = dedup(quads);
    let n = quads.len();
    let n_valid = (n as f64 * ratios.valid).round() as usize;
    let n_test = ((n as f64 * ratios.test).round() as usize).min(n - n_valid.min(n));
    let n_train = n - n_valid - n_test;

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let pick = |range: std::ops::Range<usize>| {
        let mut idx = order[range].to_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| quads[i].clone()).collect::<Vec<_>>()
    };
    let train = pick(0..n_train);
    let valid = pick(n_train..n_train + n_valid);
    let test = pick(n_train + n_valid..n);
    close_over_train(train, valid, test, n)
}

/// Chronological split: facts strictly before `cut` train; later facts are
/// divided in time order between valid and test in proportion to their
/// ratios.
pub fn split_chronological(
    quads: &[RawQuadruple],
    cut: Timestamp,
    ratios: SplitRatios,
) -> Result<SplitOutcome, DatasetError> {
    ratios.validate()?;
    let quads = dedup(quads);
    let n = quads.len();
    let (train, mut later): (Vec<_>, Vec<_>) = quads.into_iter().partition(|q| q.time < cut);
    later.sort_by_key(|q| q.time);
    let n_valid = (later.len() as f64 * ratios.valid / (ratios.valid + ratios.test)).round() as usize;
    let test = later.split_off(n_valid);
    close_over_train(train, later, test, n)
}

fn close_over_train(
    mut train: Vec<RawQuadruple>,
    valid: Vec<RawQuadruple>,
    test: Vec<RawQuadruple>,
    n: usize,
) -> Result<SplitOutcome, DatasetError> {
    let mut entities: HashSet<String> = HashSet::new();
    let mut relations: HashSet<String> = HashSet::new();
    for q in &train {
        entities.insert(q.head.clone());
        entities.insert(q.tail.clone());
        relations.insert(q.relation.clone());
    }
    let mut moved = 0;
    let mut keep = |split: Vec<RawQuadruple>, train: &mut Vec<RawQuadruple>| {
        let mut kept = Vec::with_capacity(split.len());
        for q in split {
            if entities.contains(&q.head) && entities.contains(&q.tail) && relations.contains(&q.relation) {
                kept.push(q);
            } else {
                entities.insert(q.head.clone());
                entities.insert(q.tail.clone());
                relations.insert(q.relation.clone());
                train.push(q);
                moved += 1;
            }
        }
        kept
    };
    let valid = keep(valid, &mut train);
    let test = keep(test, &mut train);
    if n > 0 && valid.is_empty() && test.is_empty() {
        return Err(DatasetError::ClosureUnsatisfiable(n));
    }
    Ok(SplitOutcome { train, valid, test, moved_to_train: moved })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub entities: usize,
    pub relations: usize,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    pub quadruples: usize,
    pub timestamps: usize,
    pub first_date: Option<Timestamp>,
    pub last_date: Option<Timestamp>,
    pub span_days: i64,
}

pub fn stats(kg: &TemporalKg) -> DatasetStats {
    let first = kg.timestamps().first().copied();
    let last = kg.timestamps().last().copied();
    DatasetStats {
        entities: kg.n_entities(),
        relations: kg.n_relations(),
        train: kg.train().len(),
        valid: kg.valid().len(),
        test: kg.test().len(),
        quadruples: kg.train().len() + kg.valid().len() + kg.test().len(),
        timestamps: kg.timestamps().len(),
        first_date: first,
        last_date: last,
        span_days: match (first, last) {
            (Some(a), Some(b)) => (b.date() - a.date()).num_days(),
            _ => 0,
        },
    }
}
