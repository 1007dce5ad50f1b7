//! File-based stages tying the modules together.
//!
//! Every stage reads its inputs from and writes its outputs to the work
//! directory, so stages can be run one by one or chained by [`run_all`].
//! Outputs depend only on the inputs and the configuration; re-running a
//! stage rewrites byte-identical files.
//!
//! | stage       | reads                                  | writes                                   |
//! |-------------|----------------------------------------|------------------------------------------|
//! | normalize   | input directory                        | `normalized/`, `images.jsonl`, `target_stats.json` |
//! | split       | `images.jsonl`                         | `split.jsonl`                            |
//! | tile        | `split.jsonl`, `normalized/`           | `patches/`, `patches.jsonl`              |
//! | augment     | `patches.jsonl`                        | `patches/`, `augmented.jsonl`            |
//! | train       | `augmented.jsonl`                      | `model.bin`, `model_config.json`, `train_metrics.csv` |
//! | predict     | `patches.jsonl`, `model.bin`           | `predictions.csv`                        |
//! | aggregate   | `predictions.csv`                      | `image_predictions.csv`                  |
//! | evaluate    | predictions, `split.jsonl`             | `report.json`, `roc_{class}.csv`         |

mod config;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::aggregation::{aggregate_all, load_image_predictions, save_image_predictions};
use crate::augmentation::{transform_image, AugTag};
use crate::color_norm::{normalize_stains, reference_stats, LabStats};
use crate::dataset::{
    load_manifest, make_split, save_manifest, ClassLabel, Manifest, ManifestRecord, SplitSet,
};
use crate::error::{Error, Result};
use crate::evaluation::{build_report, roc_csv, save_report};
use crate::image::RgbImage;
use crate::model::{
    load_params, load_predictions, predict, read_predictions, save_params, save_predictions, train,
    ModelConfig, Sample,
};
use crate::tiling::{extract_patches, patch_file_stem, Anchor, Patch};

pub use config::{PipelineConfig, SPLIT_STREAM, TRAIN_STREAM};

pub const INPUT_MANIFEST: &str = "manifest.jsonl";
pub const NORMALIZED_DIR: &str = "normalized";
pub const IMAGES: &str = "images.jsonl";
pub const TARGET_STATS: &str = "target_stats.json";
pub const SPLIT: &str = "split.jsonl";
pub const PATCH_DIR: &str = "patches";
pub const PATCHES: &str = "patches.jsonl";
pub const AUGMENTED: &str = "augmented.jsonl";
pub const MODEL: &str = "model.bin";
pub const MODEL_CONFIG: &str = "model_config.json";
pub const TRAIN_METRICS: &str = "train_metrics.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const IMAGE_PREDICTIONS: &str = "image_predictions.csv";
pub const REPORT: &str = "report.json";

/// Name of the per-class ROC file.
pub fn roc_file(class: ClassLabel) -> String {
    format!("roc_{}.csv", class.name())
}

/// What a stage produced, for progress output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSummary {
    pub stage: &'static str,
    pub items: usize,
    pub unit: &'static str,
}

impl fmt::Display for StageSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} {}", self.stage, self.items, self.unit)
    }
}

fn in_stage<T>(stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage,
            inner: Box::new(e),
        },
    })
}

fn summary(stage: &'static str, items: usize, unit: &'static str) -> StageSummary {
    StageSummary { stage, items, unit }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingInput(path))
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
        return Err(Error::InvalidConfig(format!("image id {id:?} is not a plain file name")));
    }
    Ok(())
}

/// Lists the source images of `input_dir`: the records of its
/// `manifest.jsonl` (paths relative to `input_dir`) or, without one, every
/// `*.png` under a sub-directory named after a class. Ids are file stems;
/// the result is sorted by id and paths are absolute where possible.
pub fn discover_inputs(input_dir: &Path) -> Result<Manifest> {
    if !input_dir.is_dir() {
        return Err(Error::MissingInput(input_dir.to_path_buf()));
    }
    let base = fs::canonicalize(input_dir).map_err(|e| Error::io(input_dir, e))?;
    let listed = base.join(INPUT_MANIFEST);
    let mut records = if listed.is_file() {
        load_manifest(&listed)?
            .into_records()
            .into_iter()
            .map(|r| ManifestRecord {
                path: base.join(&r.path).to_string_lossy().into_owned(),
                ..ManifestRecord::image(r.id, "", r.label)
            })
            .collect()
    } else {
        let mut found = Vec::new();
        for class in ClassLabel::ALL {
            let dir = base.join(class.name());
            if !dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
                let path = entry.map_err(|e| Error::io(&dir, e))?.path();
                let is_png = path
                    .extension()
                    .is_some_and(|e| e.eq_ignore_ascii_case("png"));
                if !is_png {
                    continue;
                }
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                found.push(ManifestRecord::image(id, path.to_string_lossy(), class));
            }
        }
        found
    };
    if records.is_empty() {
        return Err(Error::EmptyInput("input directory"));
    }
    for r in &records {
        check_id(&r.id)?;
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Manifest::new(records)
}

fn target_stats(cfg: &PipelineConfig, inputs: &Manifest) -> Result<LabStats> {
    if let Some(path) = &cfg.target_stats {
        let text = fs::read_to_string(require(path.clone())?).map_err(|e| Error::io(path, e))?;
        return LabStats::from_json(&text);
    }
    let reference = match &cfg.target_image {
        Some(path) => require(path.clone())?,
        // Without an explicit reference the first image by id serves.
        None => PathBuf::from(&inputs.records()[0].path),
    };
    Ok(reference_stats(&RgbImage::load_png(reference)?))
}

/// Stain-normalizes every input image into `normalized/{id}.png`.
pub fn normalize(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("normalize", || {
        cfg.validate()?;
        let input_dir = cfg
            .input_dir
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("no input directory given".into()))?;
        let inputs = discover_inputs(input_dir)?;
        let out_dir = cfg.work_dir.join(NORMALIZED_DIR);
        create_dir(&out_dir)?;
        let stats = if cfg.skip_normalization {
            None
        } else {
            let s = target_stats(cfg, &inputs)?;
            write_file(&cfg.work_dir.join(TARGET_STATS), format!("{}\n", s.to_json()))?;
            Some(s)
        };
        let records = inputs
            .records()
            .par_iter()
            .map(|r| {
                let img = RgbImage::load_png(&r.path)?;
                let img = match &stats {
                    Some(s) => normalize_stains(&img, s),
                    None => img,
                };
                let rel = format!("{NORMALIZED_DIR}/{}.png", r.id);
                img.save_png(cfg.work_dir.join(&rel))?;
                Ok(ManifestRecord::image(r.id.clone(), rel, r.label))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = records.len();
        save_manifest(&Manifest::new(records)?, cfg.work_dir.join(IMAGES))?;
        Ok(summary("normalize", n, "images"))
    })
}

/// Assigns every image to train, validation or test.
pub fn split(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("split", || {
        cfg.validate()?;
        let images = load_manifest(require(cfg.work_dir.join(IMAGES))?)?;
        let assignment = make_split(&images, &cfg.ratios, cfg.split_seed())?;
        save_manifest(&assignment.apply(&images)?, cfg.work_dir.join(SPLIT))?;
        Ok(summary("split", images.len(), "images"))
    })
}

fn patch_record(image: &ManifestRecord, anchor: Anchor, aug: Option<AugTag>) -> ManifestRecord {
    let stem = patch_file_stem(&image.id, anchor, aug.unwrap_or(AugTag::Identity));
    ManifestRecord {
        id: image.id.clone(),
        path: format!("{PATCH_DIR}/{stem}.png"),
        label: image.label,
        split: image.split,
        anchor_x: Some(anchor.x),
        anchor_y: Some(anchor.y),
        aug,
    }
}

/// Cuts every normalized image into overlapping patches.
pub fn tile(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("tile", || {
        cfg.validate()?;
        let images = load_manifest(require(cfg.work_dir.join(SPLIT))?)?;
        create_dir(&cfg.work_dir.join(PATCH_DIR))?;
        let per_image = images
            .records()
            .par_iter()
            .map(|r| {
                let img = RgbImage::load_png(cfg.resolve(&r.path))?;
                let patches = extract_patches(&img, &r.id, r.label, &cfg.grid)?;
                patches
                    .iter()
                    .map(|p| {
                        let rec = patch_record(r, p.anchor, None);
                        p.pixels.save_png(cfg.resolve(&rec.path))?;
                        Ok(rec)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<ManifestRecord> = per_image.into_iter().flatten().collect();
        let n = records.len();
        save_manifest(&Manifest::new(records)?, cfg.work_dir.join(PATCHES))?;
        Ok(summary("tile", n, "patches"))
    })
}

fn augmented_sets(cfg: &PipelineConfig) -> &'static [SplitSet] {
    if cfg.augment_validation {
        &[SplitSet::Train, SplitSet::Validation]
    } else {
        &[SplitSet::Train]
    }
}

/// Adds the five non-identity rigid variants of every training (and, if
/// enabled, validation) patch.
pub fn augment(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("augment", || {
        cfg.validate()?;
        let patches = load_manifest(require(cfg.work_dir.join(PATCHES))?)?;
        let sets = augmented_sets(cfg);
        let per_patch = patches
            .records()
            .par_iter()
            .map(|r| {
                let anchor = match (r.anchor_x, r.anchor_y) {
                    (Some(x), Some(y)) => Anchor { x, y },
                    _ => return Err(Error::InvalidConfig(format!("{} is not a patch record", r.id))),
                };
                let mut out = vec![patch_record(r, anchor, Some(AugTag::Identity))];
                if r.split.is_some_and(|s| sets.contains(&s)) {
                    let img = RgbImage::load_png(cfg.resolve(&r.path))?;
                    for tag in &AugTag::ALL[1..] {
                        let rec = patch_record(r, anchor, Some(*tag));
                        transform_image(&img, *tag)?.save_png(cfg.resolve(&rec.path))?;
                        out.push(rec);
                    }
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        let records: Vec<ManifestRecord> = per_patch.into_iter().flatten().collect();
        let n = records.len();
        save_manifest(&Manifest::new(records)?, cfg.work_dir.join(AUGMENTED))?;
        Ok(summary("augment", n, "patches"))
    })
}

fn load_samples(cfg: &PipelineConfig, records: &[&ManifestRecord], input_size: usize) -> Result<Vec<Sample>> {
    records
        .par_iter()
        .map(|r| {
            let img = RgbImage::load_png(cfg.resolve(&r.path))?;
            Ok(Sample::from_image(&img, r.label, input_size))
        })
        .collect()
}

/// Trains the classifier on the training patches, selecting the epoch by
/// validation accuracy.
pub fn train_model(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("train", || {
        cfg.validate()?;
        let patches = load_manifest(require(cfg.work_dir.join(AUGMENTED))?)?;
        let model = cfg.effective_model();
        let subset = |set: SplitSet| -> Vec<&ManifestRecord> {
            patches.records().iter().filter(|r| r.split == Some(set)).collect()
        };
        let train_set = load_samples(cfg, &subset(SplitSet::Train), model.input_size)?;
        let val_set = load_samples(cfg, &subset(SplitSet::Validation), model.input_size)?;
        let outcome = train(&train_set, &val_set, &model)?;

        save_params(&outcome.params, cfg.work_dir.join(MODEL))?;
        let mut json = serde_json::to_string_pretty(&model)?;
        json.push('\n');
        write_file(&cfg.work_dir.join(MODEL_CONFIG), json)?;
        let mut wtr = csv::Writer::from_writer(Vec::new());
        for m in &outcome.metrics {
            wtr.serialize(m)?;
        }
        let bytes = wtr
            .into_inner()
            .map_err(|e| Error::io(cfg.work_dir.join(TRAIN_METRICS), e.into_error()))?;
        write_file(&cfg.work_dir.join(TRAIN_METRICS), bytes)?;
        Ok(summary("train", train_set.len(), "training patches"))
    })
}

fn load_model(cfg: &PipelineConfig) -> Result<(ModelConfig, crate::model::Params)> {
    let path = require(cfg.work_dir.join(MODEL_CONFIG))?;
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let model: ModelConfig = serde_json::from_str(&text)?;
    model.validate()?;
    let params = load_params(require(cfg.work_dir.join(MODEL))?)?;
    Ok((model, params))
}

/// Classifies the identity patches of the configured split.
pub fn predict_patches(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("predict", || {
        let (model, params) = load_model(cfg)?;
        let manifest = load_manifest(require(cfg.work_dir.join(PATCHES))?)?;
        let wanted: Vec<&ManifestRecord> = manifest
            .records()
            .iter()
            .filter(|r| r.split == Some(cfg.predict_split) && r.is_identity())
            .collect();
        if wanted.is_empty() {
            return Err(Error::EmptyInput("prediction split"));
        }
        let patches = wanted
            .par_iter()
            .map(|r| {
                Ok(Patch {
                    source_image_id: r.id.clone(),
                    anchor: Anchor {
                        x: r.anchor_x.unwrap_or(0),
                        y: r.anchor_y.unwrap_or(0),
                    },
                    pixels: RgbImage::load_png(cfg.resolve(&r.path))?,
                    label: r.label,
                    augmentation: AugTag::Identity,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let preds = predict(&model, &params, &patches)?;
        save_predictions(&preds, cfg.work_dir.join(PREDICTIONS))?;
        Ok(summary("predict", preds.len(), "patches"))
    })
}

/// Image ids with their labels, from the newest available image manifest
/// or, failing that, the input directory.
fn ground_truth(cfg: &PipelineConfig) -> Result<Manifest> {
    for name in [SPLIT, IMAGES] {
        let path = cfg.work_dir.join(name);
        if path.exists() {
            return load_manifest(path);
        }
    }
    match &cfg.input_dir {
        Some(dir) => discover_inputs(dir),
        None => Err(Error::MissingInput(cfg.work_dir.join(SPLIT))),
    }
}

/// Validates externally produced patch predictions and stores them in
/// canonical form as the work directory's predictions.
pub fn ingest_predictions(cfg: &PipelineConfig, source: &Path) -> Result<StageSummary> {
    in_stage("ingest-predictions", || {
        let file = fs::File::open(require(source.to_path_buf())?).map_err(|e| Error::io(source, e))?;
        let preds = read_predictions(file)?;
        if preds.is_empty() {
            return Err(Error::EmptyInput("ingested predictions"));
        }
        let known = ground_truth(cfg)?.labels_by_id();
        if let Some(r) = preds.iter().find(|r| !known.contains_key(&r.image_id)) {
            return Err(Error::UnknownImage(r.image_id.clone()));
        }
        create_dir(&cfg.work_dir)?;
        save_predictions(&preds, cfg.work_dir.join(PREDICTIONS))?;
        Ok(summary("ingest-predictions", preds.len(), "patches"))
    })
}

/// Majority vote per image.
pub fn aggregate(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("aggregate", || {
        let preds = load_predictions(require(cfg.work_dir.join(PREDICTIONS))?)?;
        let images = aggregate_all(&preds)?;
        save_image_predictions(&images, cfg.work_dir.join(IMAGE_PREDICTIONS))?;
        Ok(summary("aggregate", images.len(), "images"))
    })
}

/// Patch-wise and image-wise accuracy plus one-vs-rest ROC per class.
pub fn evaluate(cfg: &PipelineConfig) -> Result<StageSummary> {
    in_stage("evaluate", || {
        let preds = load_predictions(require(cfg.work_dir.join(PREDICTIONS))?)?;
        let images = load_image_predictions(require(cfg.work_dir.join(IMAGE_PREDICTIONS))?)?;
        let truth = ground_truth(cfg)?.labels_by_id();
        let (report, classes) = build_report(&preds, &images, &truth)?;
        save_report(&report, cfg.work_dir.join(REPORT))?;
        for c in &classes {
            write_file(&cfg.work_dir.join(roc_file(c.class)), roc_csv(&c.curve))?;
        }
        Ok(summary("evaluate", report.n_images, "images"))
    })
}

/// normalize → split → tile → augment → train → predict → aggregate →
/// evaluate.
pub fn run_all(cfg: &PipelineConfig) -> Result<Vec<StageSummary>> {
    let stages: [fn(&PipelineConfig) -> Result<StageSummary>; 8] = [
        normalize,
        split,
        tile,
        augment,
        train_model,
        predict_patches,
        aggregate,
        evaluate,
    ];
    stages.iter().map(|stage| stage(cfg)).collect()
}
