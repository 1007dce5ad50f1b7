//! Image-level labels from patch votes.
//!
//! The image label is the class with the most patch votes. Ties go to the
//! tied class with the highest mean patch probability, and any remaining
//! tie to the lowest class code. Only identity (non-augmented) patch
//! predictions take part.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augmentation::AugTag;
use crate::dataset::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::model::PredictionRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct ImagePrediction {
    pub image_id: String,
    pub label: ClassLabel,
    pub vote_histogram: [usize; NUM_CLASSES],
    pub mean_probs: [f64; NUM_CLASSES],
}

impl ImagePrediction {
    pub fn n_patches(&self) -> usize {
        self.vote_histogram.iter().sum()
    }
}

/// Picks the label from a vote histogram and mean probabilities.
pub fn decide(votes: &[usize; NUM_CLASSES], mean_probs: &[f64; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        let better = votes[k] > votes[best] || (votes[k] == votes[best] && mean_probs[k] > mean_probs[best]);
        if better {
            best = k;
        }
    }
    ClassLabel::ALL[best]
}

/// Aggregates the identity-patch predictions of a single image.
pub fn majority_vote(records: &[PredictionRecord]) -> Result<ImagePrediction> {
    let first = records.first().ok_or(Error::EmptyInput("majority vote"))?;
    if let Some(other) = records.iter().find(|r| r.image_id != first.image_id) {
        return Err(Error::MixedImageIds {
            first: first.image_id.clone(),
            other: other.image_id.clone(),
        });
    }
    if let Some(r) = records.iter().find(|r| r.aug != AugTag::Identity) {
        return Err(Error::InvalidConfig(format!(
            "augmented prediction {}@{},{}/{} passed to majority vote",
            r.image_id, r.anchor_x, r.anchor_y, r.aug
        )));
    }
    // Canonical summation order so the mean is bit-identical under any
    // permutation of the input.
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (a.anchor_y, a.anchor_x)
            .cmp(&(b.anchor_y, b.anchor_x))
            .then_with(|| {
                a.probs
                    .iter()
                    .zip(&b.probs)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .then(a.pred.cmp(&b.pred))
    });
    let mut votes = [0usize; NUM_CLASSES];
    let mut sums = [0.0f64; NUM_CLASSES];
    for r in &sorted {
        votes[r.pred.code()] += 1;
        for k in 0..NUM_CLASSES {
            sums[k] += r.probs[k];
        }
    }
    let n = records.len() as f64;
    let mean_probs = sums.map(|s| s / n);
    Ok(ImagePrediction {
        image_id: first.image_id.clone(),
        label: decide(&votes, &mean_probs),
        vote_histogram: votes,
        mean_probs,
    })
}

/// Groups identity-patch predictions by image id (sorted) and votes each.
pub fn aggregate_all(records: &[PredictionRecord]) -> Result<Vec<ImagePrediction>> {
    let mut groups: BTreeMap<&str, Vec<PredictionRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.aug == AugTag::Identity) {
        groups.entry(&r.image_id).or_default().push(r.clone());
    }
    groups.values().map(|g| majority_vote(g)).collect()
}

#[derive(Serialize, Deserialize)]
struct Row {
    image_id: String,
    pred_label: String,
    n_patches: usize,
    votes_0: usize,
    votes_1: usize,
    votes_2: usize,
    votes_3: usize,
    mean_p_0: f64,
    mean_p_1: f64,
    mean_p_2: f64,
    mean_p_3: f64,
}

pub const IMAGE_PREDICTION_HEADER: [&str; 11] = [
    "image_id", "pred_label", "n_patches", "votes_0", "votes_1", "votes_2", "votes_3", "mean_p_0",
    "mean_p_1", "mean_p_2", "mean_p_3",
];

pub fn write_image_predictions(preds: &[ImagePrediction], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    if preds.is_empty() {
        wtr.write_record(IMAGE_PREDICTION_HEADER)?;
    }
    for p in preds {
        let [v0, v1, v2, v3] = p.vote_histogram;
        let [m0, m1, m2, m3] = p.mean_probs;
        wtr.serialize(Row {
            image_id: p.image_id.clone(),
            pred_label: p.label.name().to_owned(),
            n_patches: p.n_patches(),
            votes_0: v0,
            votes_1: v1,
            votes_2: v2,
            votes_3: v3,
            mean_p_0: m0,
            mean_p_1: m1,
            mean_p_2: m2,
            mean_p_3: m3,
        })?;
    }
    wtr.flush().map_err(|e| Error::io("<image predictions>", e))?;
    Ok(())
}

pub fn read_image_predictions(r: impl Read) -> Result<Vec<ImagePrediction>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let label = row.pred_label.parse().map_err(|_| Error::UnknownLabel {
            label: row.pred_label.clone(),
            line: Some(line),
        })?;
        let vote_histogram = [row.votes_0, row.votes_1, row.votes_2, row.votes_3];
        if vote_histogram.iter().sum::<usize>() != row.n_patches {
            return Err(Error::Parse {
                line,
                message: "votes do not sum to n_patches".into(),
            });
        }
        out.push(ImagePrediction {
            image_id: row.image_id,
            label,
            vote_histogram,
            mean_probs: [row.mean_p_0, row.mean_p_1, row.mean_p_2, row.mean_p_3],
        });
    }
    Ok(out)
}

pub fn save_image_predictions(preds: &[ImagePrediction], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_image_predictions(preds, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_image_predictions(path: impl AsRef<Path>) -> Result<Vec<ImagePrediction>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_image_predictions(f)
}
