use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: [&str; 4] = ["dist_path", "ref_path", "score", "ref_id"];

/// One distorted image, its pristine reference and the subjective score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub dist_path: PathBuf,
    pub ref_path: PathBuf,
    pub score: f64,
    /// Identifies the reference content; shared by all its distortions.
    pub ref_id: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub samples: Vec<Sample>,
}

impl Manifest {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Distinct reference ids in sorted order.
    pub fn ref_ids(&self) -> Vec<String> {
        self.samples
            .iter()
            .map(|s| s.ref_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.score).collect()
    }

    /// Samples whose reference is in `refs`, in manifest order.
    pub fn filter_refs(&self, refs: &BTreeSet<String>) -> Manifest {
        Manifest::new(
            self.samples
                .iter()
                .filter(|s| refs.contains(&s.ref_id))
                .cloned()
                .collect(),
        )
    }

    /// Reads a manifest; relative paths are resolved against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let row_err = |row: usize, msg: String| Error::Manifest {
            path: path.to_path_buf(),
            row,
            msg,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let header = reader
            .headers()
            .map_err(|e| row_err(0, format!("unreadable header: {e}")))?
            .clone();
        if header.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(row_err(
                0,
                format!(
                    "header must be {:?}, found {:?}",
                    MANIFEST_HEADER.join(","),
                    header.iter().collect::<Vec<_>>().join(",")
                ),
            ));
        }
        let mut samples = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 1;
            let record = record.map_err(|e| row_err(row, e.to_string()))?;
            if record.len() != 4 {
                return Err(row_err(row, format!("expected 4 fields, got {}", record.len())));
            }
            let score: f64 = record[2]
                .parse()
                .map_err(|_| row_err(row, format!("score {:?} is not a number", &record[2])))?;
            if !score.is_finite() {
                return Err(row_err(row, format!("score {score} is not finite")));
            }
            let resolve = |field: &str| -> Result<PathBuf> {
                let p = base.join(field);
                if !p.is_file() {
                    return Err(row_err(row, format!("missing file {}", p.display())));
                }
                Ok(p)
            };
            samples.push(Sample {
                dist_path: resolve(&record[0])?,
                ref_path: resolve(&record[1])?,
                score,
                ref_id: record[3].to_string(),
            });
        }
        if samples.is_empty() {
            return Err(row_err(1, "manifest has no samples".into()));
        }
        Ok(Self { samples })
    }

    /// Writes the manifest, storing paths relative to its directory where possible.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let rel = |p: &Path| -> String {
            let p = p.strip_prefix(base).unwrap_or(p);
            p.to_string_lossy().into_owned()
        };
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        writer.write_record(MANIFEST_HEADER).map_err(|e| csv_io(path, e))?;
        for s in &self.samples {
            writer
                .write_record([
                    rel(&s.dist_path),
                    rel(&s.ref_path),
                    s.score.to_string(),
                    s.ref_id.clone(),
                ])
                .map_err(|e| csv_io(path, e))?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Content-disjoint train/test partition.
#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Manifest,
    pub test: Manifest,
    pub train_refs: Vec<String>,
    pub test_refs: Vec<String>,
}

/// Shuffles reference ids and assigns `round(train_fraction * refs)` of them to training.
///
/// The count is clamped so both sides keep at least one reference.
pub fn split_by_reference(manifest: &Manifest, train_fraction: f64, rng: &mut impl Rng) -> Result<Split> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Config(format!("train_fraction {train_fraction} outside [0, 1]")));
    }
    let mut refs = manifest.ref_ids();
    if refs.len() < 2 {
        return Err(Error::Input(format!(
            "splitting by reference needs at least 2 distinct references, got {}",
            refs.len()
        )));
    }
    refs.shuffle(rng);
    let n_train = ((train_fraction * refs.len() as f64 + 0.5).floor() as usize).clamp(1, refs.len() - 1);
    let mut train_refs = refs[..n_train].to_vec();
    let mut test_refs = refs[n_train..].to_vec();
    let train = manifest.filter_refs(&train_refs.iter().cloned().collect());
    let test = manifest.filter_refs(&test_refs.iter().cloned().collect());
    train_refs.sort();
    test_refs.sort();
    Ok(Split {
        train,
        test,
        train_refs,
        test_refs,
    })
}
