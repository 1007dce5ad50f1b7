//! Accuracy, one-vs-rest ROC curves, trapezoidal AUC, and sensitivity /
//! specificity at the argmax operating point.
//!
//! ROC thresholds sweep the distinct scores in descending order; samples
//! sharing a score enter in the same step, which makes the trapezoidal area
//! equal to the Mann-Whitney statistic `P(s⁺ > s⁻) + ½ P(s⁺ = s⁻)`.
//! Image-level curves score each image by its mean patch probability.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::aggregation::ImagePrediction;
use crate::augmentation::AugTag;
use crate::dataset::{ClassLabel, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::model::PredictionRecord;

pub fn accuracy(predicted: &[ClassLabel], truth: &[ClassLabel]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(Error::EmptyInput("accuracy"));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / predicted.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Samples scoring at least this value are called positive; the first
    /// point carries `+∞`.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
}

pub fn roc_curve(scores: &[f64], positives: &[bool]) -> Result<RocCurve> {
    if scores.len() != positives.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positives.len(),
        });
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig(format!("non-finite score {s}")));
    }
    let n_pos = positives.iter().filter(|&&p| p).count();
    let n_neg = positives.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if positives[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
            threshold,
        });
    }
    Ok(RocCurve { points })
}

/// Trapezoidal area under the curve.
pub fn auc(curve: &RocCurve) -> f64 {
    curve
        .points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[0].tpr + w[1].tpr) * 0.5)
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassReport {
    pub class: ClassLabel,
    pub curve: RocCurve,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

/// Per-class ROC, AUC and argmax-rule sensitivity/specificity. Every class
/// must occur in `truth`.
pub fn one_vs_rest_report(
    probs: &[[f64; NUM_CLASSES]],
    predicted: &[ClassLabel],
    truth: &[ClassLabel],
) -> Result<Vec<ClassReport>> {
    if probs.len() != truth.len() || predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: probs.len().min(predicted.len()),
            right: truth.len(),
        });
    }
    for class in ClassLabel::ALL {
        if !truth.contains(&class) {
            return Err(Error::MissingClass(class.name()));
        }
    }
    ClassLabel::ALL
        .iter()
        .map(|&class| {
            let positives: Vec<bool> = truth.iter().map(|&t| t == class).collect();
            let scores: Vec<f64> = probs.iter().map(|p| p[class.code()]).collect();
            let curve = roc_curve(&scores, &positives)?;
            let (mut tp, mut tn, mut p, mut n) = (0, 0, 0, 0);
            for (&is_pos, &pred) in positives.iter().zip(predicted) {
                let called = pred == class;
                if is_pos {
                    p += 1;
                    tp += usize::from(called);
                } else {
                    n += 1;
                    tn += usize::from(!called);
                }
            }
            Ok(ClassReport {
                class,
                auc: auc(&curve),
                curve,
                sensitivity: tp as f64 / p as f64,
                specificity: tn as f64 / n as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub class: ClassLabel,
    pub auc: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub n_patches: usize,
    pub n_images: usize,
    pub patch_accuracy: f64,
    pub image_accuracy: f64,
    pub per_class: Vec<ClassSummary>,
}

/// Full report over identity patch predictions and their image-level
/// aggregates. `truth` maps image id to label.
pub fn build_report(
    patches: &[PredictionRecord],
    images: &[ImagePrediction],
    truth: &BTreeMap<String, ClassLabel>,
) -> Result<(EvaluationReport, Vec<ClassReport>)> {
    let lookup = |id: &str| truth.get(id).copied().ok_or_else(|| Error::UnknownImage(id.to_owned()));

    let identity: Vec<&PredictionRecord> = patches.iter().filter(|r| r.aug == AugTag::Identity).collect();
    let patch_pred: Vec<ClassLabel> = identity.iter().map(|r| r.pred).collect();
    let patch_truth = identity.iter().map(|r| lookup(&r.image_id)).collect::<Result<Vec<_>>>()?;
    let patch_accuracy = accuracy(&patch_pred, &patch_truth)?;

    let image_pred: Vec<ClassLabel> = images.iter().map(|p| p.label).collect();
    let image_truth = images.iter().map(|p| lookup(&p.image_id)).collect::<Result<Vec<_>>>()?;
    let image_accuracy = accuracy(&image_pred, &image_truth)?;
    let probs: Vec<[f64; NUM_CLASSES]> = images.iter().map(|p| p.mean_probs).collect();
    let classes = one_vs_rest_report(&probs, &image_pred, &image_truth)?;

    let report = EvaluationReport {
        n_patches: identity.len(),
        n_images: images.len(),
        patch_accuracy,
        image_accuracy,
        per_class: classes
            .iter()
            .map(|c| ClassSummary {
                class: c.class,
                auc: c.auc,
                sensitivity: c.sensitivity,
                specificity: c.specificity,
            })
            .collect(),
    };
    Ok((report, classes))
}

/// `fpr,tpr,threshold` rows; the opening threshold is written as `inf`.
pub fn roc_csv(curve: &RocCurve) -> String {
    let mut out = String::from("fpr,tpr,threshold\n");
    for p in &curve.points {
        let t = if p.threshold.is_infinite() {
            "inf".to_owned()
        } else {
            p.threshold.to_string()
        };
        out.push_str(&format!("{},{},{}\n", p.fpr, p.tpr, t));
    }
    out
}

pub fn save_report(report: &EvaluationReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
