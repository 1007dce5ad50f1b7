//! Properties spanning several modules, checked on generated inputs.

use std::collections::BTreeMap;

use histotile_core::aggregation::majority_vote;
use histotile_core::augmentation::{augment_all, AugTag};
use histotile_core::color_norm::{channel_stats, normalize_stains, reference_stats, rgb_to_lab};
use histotile_core::dataset::{ClassLabel, XorShift64Star};
use histotile_core::image::RgbImage;
use histotile_core::model::{argmax, PredictionRecord};
use histotile_core::tiling::{compute_grid, extract_patches, GridSpec};
use proptest::prelude::*;

fn random_image(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = XorShift64Star::new(seed);
    RgbImage::from_fn(w, h, |_, _| [0, 1, 2].map(|_| rng.below(256) as u8)).unwrap()
}

/// Smooth two-tone image with a random tint, closer to stained tissue than
/// uniform noise.
fn tissue_like(w: usize, h: usize, seed: u64) -> RgbImage {
    let mut rng = XorShift64Star::new(seed);
    let bg = [0, 1, 2].map(|_| 150.0 + rng.next_f64() * 100.0);
    let fg = [0, 1, 2].map(|_| 30.0 + rng.next_f64() * 120.0);
    let period = 4.0 + rng.next_f64() * 12.0;
    RgbImage::from_fn(w, h, |x, y| {
        let t = 0.5 + 0.5 * (x as f64 / period).sin() * (y as f64 / period).cos();
        let n = rng.next_f64() * 10.0;
        [0, 1, 2].map(|c| (bg[c] + (fg[c] - bg[c]) * t + n).round().clamp(0.0, 255.0) as u8)
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn patches_cover_image_and_match_crops(
        p in 2usize..12, extra_w in 0usize..30, extra_h in 0usize..30,
        overlap in 0.0f64..0.9, seed in any::<u64>()
    ) {
        let spec = GridSpec::new(p, overlap);
        prop_assume!(spec.is_ok());
        let spec = spec.unwrap();
        let (w, h) = (p + extra_w, p + extra_h);
        let img = random_image(w, h, seed);
        let patches = extract_patches(&img, "img", ClassLabel::Benign, &spec).unwrap();
        let mut covered = vec![false; w * h];
        for patch in &patches {
            for y in 0..p {
                for x in 0..p {
                    let (ax, ay) = (patch.anchor.x + x, patch.anchor.y + y);
                    prop_assert_eq!(patch.pixels.pixel(x, y), img.pixel(ax, ay));
                    covered[ay * w + ax] = true;
                }
            }
        }
        prop_assert!(covered.iter().all(|&c| c));
        prop_assert_eq!(augment_all(&patches).unwrap().len(), 6 * patches.len());
    }

    #[test]
    fn normalized_statistics_hit_target(
        w in 8usize..24, h in 8usize..24, src in any::<u64>(), tgt in any::<u64>()
    ) {
        let source = tissue_like(w, h, src);
        let target = reference_stats(&tissue_like(32, 32, tgt));
        let got = channel_stats(&rgb_to_lab(&normalize_stains(&source, &target)));
        for c in 0..3 {
            prop_assert!((got.mean[c] - target.mean[c]).abs() <= 0.05, "mean {c}: {:?} vs {:?}", got, target);
            prop_assert!((got.std[c] - target.std[c]).abs() <= 0.05, "std {c}: {:?} vs {:?}", got, target);
        }
    }

    #[test]
    fn vote_ignores_record_order(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = XorShift64Star::new(seed);
        let mut records: Vec<PredictionRecord> = (0..n)
            .map(|i| {
                let raw = [0, 1, 2, 3].map(|_| rng.next_f64() + 1e-3);
                let s: f64 = raw.iter().sum();
                let probs = raw.map(|v| v / s);
                PredictionRecord {
                    image_id: "x".into(),
                    anchor_x: i,
                    anchor_y: 0,
                    aug: AugTag::Identity,
                    probs,
                    pred: argmax(&probs),
                }
            })
            .collect();
        let first = majority_vote(&records).unwrap();
        rng.shuffle(&mut records);
        prop_assert_eq!(majority_vote(&records).unwrap(), first);
    }
}

#[test]
fn grid_for_2040_by_1536() {
    let spec = GridSpec::new(512, 0.5).unwrap();
    let anchors = compute_grid(2040, 1536, &spec).unwrap();
    assert_eq!(anchors.len(), 35);
    let xs: Vec<usize> = anchors.iter().filter(|a| a.y == 0).map(|a| a.x).collect();
    assert_eq!(xs, [0, 256, 512, 768, 1024, 1280, 1528]);
    let mut per_row = BTreeMap::new();
    for a in &anchors {
        *per_row.entry(a.y).or_insert(0) += 1;
    }
    assert_eq!(per_row.keys().copied().collect::<Vec<_>>(), [0, 256, 512, 768, 1024]);
    assert!(per_row.values().all(|&n| n == 7));
}
