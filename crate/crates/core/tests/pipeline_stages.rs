//! Stage-by-stage runs over a small on-disk image set.

use std::fs;
use std::path::Path;

use histotile_core::aggregation::load_image_predictions;
use histotile_core::color_norm::{channel_stats, rgb_to_lab, LabStats};
use histotile_core::dataset::{load_manifest, ClassLabel, SplitRatios, SplitSet, XorShift64Star};
use histotile_core::image::RgbImage;
use histotile_core::model::{load_predictions, ModelConfig};
use histotile_core::pipeline::{self as stages, PipelineConfig};
use histotile_core::tiling::GridSpec;
use histotile_core::Error;

fn noisy_image(seed: u64, size: usize) -> RgbImage {
    let mut rng = XorShift64Star::new(seed);
    let tint = [rng.below(60) as u8, rng.below(60) as u8, rng.below(60) as u8];
    RgbImage::from_fn(size, size, |_, _| tint.map(|t| 120 + t + rng.below(60) as u8)).unwrap()
}

fn write_inputs(dir: &Path) {
    for class in ClassLabel::ALL {
        fs::create_dir_all(dir.join(class.name())).unwrap();
        for i in 0..4 {
            let seed = (class.code() * 10 + i) as u64 + 1;
            noisy_image(seed, 48)
                .save_png(dir.join(class.name()).join(format!("{}{i}.png", class.name())))
                .unwrap();
        }
    }
}

fn config(root: &Path) -> PipelineConfig {
    PipelineConfig {
        input_dir: Some(root.join("in")),
        work_dir: root.join("work"),
        grid: GridSpec::new(32, 0.5).unwrap(),
        ratios: SplitRatios::new(0.5, 0.25, 0.25).unwrap(),
        seed: 21,
        model: ModelConfig {
            input_size: 8,
            widths: vec![2, 4],
            batch_size: 16,
            max_epochs: 1,
            ..ModelConfig::default()
        },
        ..PipelineConfig::default()
    }
}

fn setup() -> (tempfile::TempDir, PipelineConfig) {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(&dir.path().join("in"));
    let cfg = config(dir.path());
    fs::create_dir_all(&cfg.work_dir).unwrap();
    (dir, cfg)
}

#[test]
fn stages_produce_expected_artifacts() {
    let (_dir, cfg) = setup();
    let w = &cfg.work_dir;

    assert_eq!(stages::normalize(&cfg).unwrap().items, 16);
    let images = load_manifest(w.join(stages::IMAGES)).unwrap();
    assert_eq!(images.class_histogram(), [4, 4, 4, 4]);
    let target = LabStats::from_json(&fs::read_to_string(w.join(stages::TARGET_STATS)).unwrap()).unwrap();
    for r in images.records() {
        let img = RgbImage::load_png(w.join(&r.path)).unwrap();
        let s = channel_stats(&rgb_to_lab(&img));
        for c in 0..3 {
            assert!((s.mean[c] - target.mean[c]).abs() < 0.05, "{} channel {c}", r.id);
        }
    }

    stages::split(&cfg).unwrap();
    let split = load_manifest(w.join(stages::SPLIT)).unwrap();
    for set in SplitSet::ALL {
        let per_class = split.records().iter().filter(|r| r.split == Some(set)).count();
        assert_eq!(per_class, if set == SplitSet::Train { 8 } else { 4 });
    }

    // 48 px images, 32 px patches, stride 16 → anchors {0, 16} per axis.
    assert_eq!(stages::tile(&cfg).unwrap().items, 16 * 4);
    let patches = load_manifest(w.join(stages::PATCHES)).unwrap();
    let first = &patches.records()[0];
    assert_eq!((first.anchor_x, first.anchor_y, first.aug), (Some(0), Some(0), None));
    assert!(first.path.ends_with(&format!("{}_0_0.png", first.id)));
    assert_eq!(RgbImage::load_png(w.join(&first.path)).unwrap().width(), 32);

    // Train and validation patches gain five variants each.
    let n_aug = stages::augment(&cfg).unwrap().items;
    assert_eq!(n_aug, 12 * 4 * 6 + 4 * 4);
    let augmented = load_manifest(w.join(stages::AUGMENTED)).unwrap();
    assert!(augmented
        .records()
        .iter()
        .all(|r| r.split != Some(SplitSet::Test) || r.is_identity()));

    stages::train_model(&cfg).unwrap();
    let metrics = fs::read_to_string(w.join(stages::TRAIN_METRICS)).unwrap();
    assert_eq!(metrics.lines().count(), 2);
    assert!(metrics.starts_with("epoch,train_loss,train_accuracy,val_loss,val_accuracy\n"));

    assert_eq!(stages::predict_patches(&cfg).unwrap().items, 4 * 4);
    let preds = load_predictions(w.join(stages::PREDICTIONS)).unwrap();
    assert!(preds.iter().all(|p| split
        .records()
        .iter()
        .any(|r| r.id == p.image_id && r.split == Some(SplitSet::Test))));

    assert_eq!(stages::aggregate(&cfg).unwrap().items, 4);
    assert_eq!(load_image_predictions(w.join(stages::IMAGE_PREDICTIONS)).unwrap().len(), 4);

    stages::evaluate(&cfg).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(w.join(stages::REPORT)).unwrap()).unwrap();
    assert_eq!(report["n_images"], 4);
    assert_eq!(report["n_patches"], 16);
    for class in ClassLabel::ALL {
        let roc = fs::read_to_string(w.join(stages::roc_file(class))).unwrap();
        assert!(roc.starts_with("fpr,tpr,threshold\n0,0,inf\n"), "{roc}");
    }
}

#[test]
fn ingested_perfect_predictions_score_one() {
    let (_dir, cfg) = setup();
    stages::normalize(&cfg).unwrap();
    stages::split(&cfg).unwrap();
    let split = load_manifest(cfg.work_dir.join(stages::SPLIT)).unwrap();

    let mut csv = String::from("image_id,anchor_x,anchor_y,aug,p_normal,p_benign,p_insitu,p_invasive,pred_label\n");
    for r in split.records().iter().filter(|r| r.split == Some(SplitSet::Test)) {
        for anchor in [0, 16] {
            let mut p = [0.1; 4];
            p[r.label.code()] = 0.7;
            csv.push_str(&format!(
                "{},{anchor},0,identity,{},{},{},{},\n",
                r.id, p[0], p[1], p[2], p[3]
            ));
        }
    }
    let external = cfg.work_dir.join("external.csv");
    fs::write(&external, csv).unwrap();
    assert_eq!(stages::ingest_predictions(&cfg, &external).unwrap().items, 8);
    stages::aggregate(&cfg).unwrap();
    stages::evaluate(&cfg).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cfg.work_dir.join(stages::REPORT)).unwrap()).unwrap();
    assert_eq!(report["patch_accuracy"], 1.0);
    assert_eq!(report["image_accuracy"], 1.0);
    for c in report["per_class"].as_array().unwrap() {
        assert_eq!(c["auc"], 1.0);
    }
}

#[test]
fn ingest_rejects_unknown_images() {
    let (_dir, cfg) = setup();
    stages::normalize(&cfg).unwrap();
    let external = cfg.work_dir.join("external.csv");
    fs::write(
        &external,
        "image_id,anchor_x,anchor_y,aug,p_normal,p_benign,p_insitu,p_invasive,pred_label\nghost,0,0,identity,1,0,0,0,normal\n",
    )
    .unwrap();
    let err = stages::ingest_predictions(&cfg, &external).unwrap_err();
    assert!(err.to_string().starts_with("ingest-predictions: "), "{err}");
    assert!(matches!(err, Error::Stage { inner, .. } if matches!(*inner, Error::UnknownImage(_))));
}

#[test]
fn stages_are_idempotent() {
    let (_dir, cfg) = setup();
    let w = &cfg.work_dir;
    stages::normalize(&cfg).unwrap();
    stages::split(&cfg).unwrap();
    stages::tile(&cfg).unwrap();
    let files = [stages::IMAGES, stages::TARGET_STATS, stages::SPLIT, stages::PATCHES];
    let before: Vec<Vec<u8>> = files.iter().map(|f| fs::read(w.join(f)).unwrap()).collect();
    let patch = fs::read(w.join("patches/benign0_16_16.png")).unwrap();
    stages::normalize(&cfg).unwrap();
    stages::split(&cfg).unwrap();
    stages::tile(&cfg).unwrap();
    let after: Vec<Vec<u8>> = files.iter().map(|f| fs::read(w.join(f)).unwrap()).collect();
    assert_eq!(before, after);
    assert_eq!(patch, fs::read(w.join("patches/benign0_16_16.png")).unwrap());
}

#[test]
fn missing_inputs_name_the_stage() {
    let (_dir, cfg) = setup();
    for (stage, result) in [
        ("split", stages::split(&cfg)),
        ("tile", stages::tile(&cfg)),
        ("augment", stages::augment(&cfg)),
        ("train", stages::train_model(&cfg)),
        ("predict", stages::predict_patches(&cfg)),
        ("aggregate", stages::aggregate(&cfg)),
        ("evaluate", stages::evaluate(&cfg)),
    ] {
        let err = result.unwrap_err();
        assert!(err.to_string().starts_with(&format!("{stage}: ")), "{err}");
        assert!(matches!(err, Error::Stage { inner, .. } if matches!(*inner, Error::MissingInput(_))));
    }
}

#[test]
fn images_smaller_than_patches_fail_tiling() {
    let (_dir, mut cfg) = setup();
    stages::normalize(&cfg).unwrap();
    stages::split(&cfg).unwrap();
    cfg.grid = GridSpec::new(64, 0.5).unwrap();
    let err = stages::tile(&cfg).unwrap_err();
    assert!(err.to_string().starts_with("tile: "), "{err}");
}

#[test]
fn split_seed_changes_assignment() {
    let (_dir, mut cfg) = setup();
    stages::normalize(&cfg).unwrap();
    stages::split(&cfg).unwrap();
    let a = fs::read(cfg.work_dir.join(stages::SPLIT)).unwrap();
    cfg.seed += 1;
    stages::split(&cfg).unwrap();
    assert_ne!(a, fs::read(cfg.work_dir.join(stages::SPLIT)).unwrap());
}
