//! Synthetic four-class fixture and helpers for driving the binary.
//!
//! Class is carried by texture, not color, so it survives stain
//! normalization and rigid augmentation:
//! normal = smooth blobs, benign = coarse checkerboard,
//! in situ = dot lattice, invasive = fine noise.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use histotile_core::dataset::{ClassLabel, XorShift64Star};
use histotile_core::image::RgbImage;

pub const FIXTURE_PER_CLASS: usize = 4;
pub const FIXTURE_SIZE: usize = 128;
pub const FIXTURE_PATCH: usize = 64;

fn texture(class: ClassLabel, x: f64, y: f64, phase: (f64, f64), rng: &mut XorShift64Star) -> f64 {
    use std::f64::consts::TAU;
    let (px, py) = phase;
    match class {
        ClassLabel::Normal => 0.5 + 0.5 * ((x + px) * TAU / 64.0).sin() * ((y + py) * TAU / 64.0).sin(),
        ClassLabel::Benign => {
            let s = ((x + px) * TAU / 16.0).sin() * ((y + py) * TAU / 16.0).sin();
            if s >= 0.0 { 1.0 } else { 0.0 }
        }
        ClassLabel::InSitu => {
            let dx = (x + px).rem_euclid(16.0) - 8.0;
            let dy = (y + py).rem_euclid(16.0) - 8.0;
            if dx * dx + dy * dy <= 9.0 { 1.0 } else { 0.0 }
        }
        ClassLabel::Invasive => rng.next_f64(),
    }
}

/// One H&E-tinted texture image.
pub fn fixture_image(class: ClassLabel, index: usize, size: usize) -> RgbImage {
    let mut rng = XorShift64Star::new(1 + (class.code() * 1000 + index) as u64);
    let phase = (rng.next_f64() * 64.0, rng.next_f64() * 64.0);
    let jitter = |rng: &mut XorShift64Star, v: f64| v + (rng.next_f64() - 0.5) * 40.0;
    let bg = [jitter(&mut rng, 230.0), jitter(&mut rng, 170.0), jitter(&mut rng, 200.0)];
    let fg = [jitter(&mut rng, 110.0), jitter(&mut rng, 50.0), jitter(&mut rng, 150.0)];
    let mut img = RgbImage::filled(size, size, [0, 0, 0]).unwrap();
    for y in 0..size {
        for x in 0..size {
            let t = texture(class, x as f64, y as f64, phase, &mut rng);
            let noise = (rng.next_f64() - 0.5) * 6.0;
            let px = [0, 1, 2].map(|c| (bg[c] + (fg[c] - bg[c]) * t + noise).round().clamp(0.0, 255.0) as u8);
            img.set_pixel(x, y, px);
        }
    }
    img
}

/// Writes `{class}/{class}_{i}.png` for every class.
pub fn write_fixture(dir: &Path, per_class: usize, size: usize) {
    for class in ClassLabel::ALL {
        let sub = dir.join(class.name());
        fs::create_dir_all(&sub).unwrap();
        for i in 0..per_class {
            fixture_image(class, i, size)
                .save_png(sub.join(format!("{}_{i}.png", class.name())))
                .unwrap();
        }
    }
}

/// Configuration used with the fixture: half the images train, a quarter
/// validate, a quarter test, so every class reaches the test set.
pub fn fixture_config(input_dir: &Path, work_dir: &Path) -> String {
    serde_json::json!({
        "input_dir": input_dir,
        "work_dir": work_dir,
        "seed": 7,
        "grid": {"patch_size": FIXTURE_PATCH, "overlap_fraction": 0.5},
        "ratios": {"train": 0.5, "validation": 0.25, "test": 0.25},
        "model": {"input_size": 32, "widths": [8, 16], "learning_rate": 0.005, "batch_size": 4, "max_epochs": 8}
    })
    .to_string()
}

pub fn histotile(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_histotile"))
        .args(args)
        .output()
        .expect("spawn histotile")
}

pub fn histotile_ok(args: &[&str]) -> String {
    let out = histotile(args);
    assert!(
        out.status.success(),
        "histotile {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every file under `dir` keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}
