//! Class labels, line-oriented JSON manifests and stratified splitting.

mod rng;
mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::augmentation::AugTag;
use crate::error::{Error, Result};

pub use rng::{derive_seed, splitmix64, XorShift64Star};
pub use split::{make_split, split_counts, Split, SplitRatios};

/// The four tissue classes, with fixed integer codes 0..3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Normal = 0,
    Benign = 1,
    InSitu = 2,
    Invasive = 3,
}

pub const NUM_CLASSES: usize = 4;

impl ClassLabel {
    pub const ALL: [ClassLabel; NUM_CLASSES] = [
        ClassLabel::Normal,
        ClassLabel::Benign,
        ClassLabel::InSitu,
        ClassLabel::Invasive,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Self> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassLabel::Normal => "normal",
            ClassLabel::Benign => "benign",
            ClassLabel::InSitu => "in_situ",
            ClassLabel::Invasive => "invasive",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownLabel {
                label: s.to_owned(),
                line: None,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSet {
    Train,
    Validation,
    Test,
}

impl SplitSet {
    pub const ALL: [SplitSet; 3] = [SplitSet::Train, SplitSet::Validation, SplitSet::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitSet::Train => "train",
            SplitSet::Validation => "validation",
            SplitSet::Test => "test",
        }
    }
}

impl fmt::Display for SplitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One manifest line. Image-level records leave the patch fields empty;
/// patch-level records repeat the source image id in `id` and are keyed by
/// `(id, anchor_x, anchor_y, aug)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestRecord {
    pub id: String,
    pub path: String,
    pub label: ClassLabel,
    pub split: Option<SplitSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor_y: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aug: Option<AugTag>,
}

impl ManifestRecord {
    pub fn image(id: impl Into<String>, path: impl Into<String>, label: ClassLabel) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            label,
            split: None,
            anchor_x: None,
            anchor_y: None,
            aug: None,
        }
    }

    pub fn is_patch(&self) -> bool {
        self.anchor_x.is_some()
    }

    /// Patch records without an explicit tag count as identity.
    pub fn is_identity(&self) -> bool {
        matches!(self.aug, None | Some(AugTag::Identity))
    }

    fn key(&self) -> (String, Option<usize>, Option<usize>, Option<AugTag>) {
        (self.id.clone(), self.anchor_x, self.anchor_y, self.aug)
    }
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    path: String,
    label: String,
    #[serde(default)]
    split: Option<SplitSet>,
    #[serde(default)]
    anchor_x: Option<usize>,
    #[serde(default)]
    anchor_y: Option<usize>,
    #[serde(default)]
    aug: Option<AugTag>,
}

/// Ordered collection of records with unique keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    records: Vec<ManifestRecord>,
}

impl Manifest {
    pub fn new(records: Vec<ManifestRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for r in &records {
            if !seen.insert(r.key()) {
                return Err(Error::DuplicateRecord(describe(r)));
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[ManifestRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<ManifestRecord> {
        self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn class_histogram(&self) -> [usize; NUM_CLASSES] {
        let mut h = [0; NUM_CLASSES];
        for r in &self.records {
            h[r.label.code()] += 1;
        }
        h
    }

    /// Label of every distinct `id`.
    pub fn labels_by_id(&self) -> BTreeMap<String, ClassLabel> {
        self.records
            .iter()
            .map(|r| (r.id.clone(), r.label))
            .collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?;
            let label = raw.label.parse().map_err(|_| Error::UnknownLabel {
                label: raw.label.clone(),
                line: Some(line_no),
            })?;
            records.push(ManifestRecord {
                id: raw.id,
                path: raw.path,
                label,
                split: raw.split,
                anchor_x: raw.anchor_x,
                anchor_y: raw.anchor_y,
                aug: raw.aug,
            });
        }
        Self::new(records)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serialize"));
            out.push('\n');
        }
        out
    }
}

fn describe(r: &ManifestRecord) -> String {
    match (r.anchor_x, r.anchor_y) {
        (Some(x), Some(y)) => format!(
            "{}@{x},{y}/{}",
            r.id,
            r.aug.unwrap_or(AugTag::Identity)
        ),
        _ => r.id.clone(),
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(|e| Error::io(path, e))?);
        text.push('\n');
    }
    Manifest::parse(&text)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(manifest.to_jsonl().as_bytes())
        .map_err(|e| Error::io(path, e))
}
