//! Per-patch predictions and their CSV interchange format.
//!
//! Columns: `image_id, anchor_x, anchor_y, aug, p_normal, p_benign,
//! p_insitu, p_invasive, pred_label`. The same layout is accepted from
//! external models; there `pred_label` may be left empty, in which case the
//! argmax of the probabilities is used.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::network::{prepare_input, Network};
use super::{ModelConfig, Params};
use crate::augmentation::AugTag;
use crate::dataset::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::tiling::Patch;

pub const PREDICTION_HEADER: [&str; 9] = [
    "image_id", "anchor_x", "anchor_y", "aug", "p_normal", "p_benign", "p_insitu", "p_invasive",
    "pred_label",
];

/// Ingested probability vectors may be off by this much before rejection;
/// accepted vectors are rescaled to sum to one.
const PROB_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub image_id: String,
    pub anchor_x: usize,
    pub anchor_y: usize,
    pub aug: AugTag,
    pub probs: [f64; NUM_CLASSES],
    pub pred: ClassLabel,
}

/// Index of the largest probability; ties go to the lowest class code.
pub fn argmax(probs: &[f64; NUM_CLASSES]) -> ClassLabel {
    let mut best = 0;
    for k in 1..NUM_CLASSES {
        if probs[k] > probs[best] {
            best = k;
        }
    }
    ClassLabel::ALL[best]
}

pub fn predict(config: &ModelConfig, params: &Params, patches: &[Patch]) -> Result<Vec<PredictionRecord>> {
    let net = Network::new(config, params)?;
    patches
        .par_iter()
        .map(|p| {
            let probs = net.probabilities(&prepare_input(&p.pixels, config.input_size))?;
            Ok(PredictionRecord {
                image_id: p.source_image_id.clone(),
                anchor_x: p.anchor.x,
                anchor_y: p.anchor.y,
                aug: p.augmentation,
                probs,
                pred: argmax(&probs),
            })
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct Row {
    image_id: String,
    anchor_x: usize,
    anchor_y: usize,
    aug: AugTag,
    p_normal: f64,
    p_benign: f64,
    p_insitu: f64,
    p_invasive: f64,
    pred_label: String,
}

pub fn write_predictions(records: &[PredictionRecord], w: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(Row {
            image_id: r.image_id.clone(),
            anchor_x: r.anchor_x,
            anchor_y: r.anchor_y,
            aug: r.aug,
            p_normal: r.probs[0],
            p_benign: r.probs[1],
            p_insitu: r.probs[2],
            p_invasive: r.probs[3],
            pred_label: r.pred.name().to_owned(),
        })?;
    }
    if records.is_empty() {
        wtr.write_record(PREDICTION_HEADER)?;
    }
    wtr.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub fn read_predictions(r: impl Read) -> Result<Vec<PredictionRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != PREDICTION_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header {}", PREDICTION_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let raw = [row.p_normal, row.p_benign, row.p_insitu, row.p_invasive];
        if raw.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Parse {
                line,
                message: format!("invalid probabilities {raw:?}"),
            });
        }
        let sum: f64 = raw.iter().sum();
        if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::Parse {
                line,
                message: format!("probabilities sum to {sum}"),
            });
        }
        let probs = if sum == 1.0 { raw } else { raw.map(|p| p / sum) };
        let pred = if row.pred_label.is_empty() {
            argmax(&probs)
        } else {
            row.pred_label.parse().map_err(|_| Error::UnknownLabel {
                label: row.pred_label.clone(),
                line: Some(line),
            })?
        };
        out.push(PredictionRecord {
            image_id: row.image_id,
            anchor_x: row.anchor_x,
            anchor_y: row.anchor_y,
            aug: row.aug,
            probs,
            pred,
        });
    }
    Ok(out)
}

pub fn save_predictions(records: &[PredictionRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_predictions(records, &mut buf)?;
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_predictions(f)
}
