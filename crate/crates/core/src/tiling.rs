//! Overlapping patch grids with optional right/bottom edge anchoring.
//!
//! Per axis the anchors are `0, S, 2S, ...` up to `dim − P`, where
//! `S = round(P · (1 − overlap))`. With edge anchoring, a final anchor at
//! `dim − P` is appended when the regular stride does not land on it, so the
//! patches cover every pixel. A 2040×1536 image at P = 512 and 50% overlap
//! therefore yields 7 × 5 = 35 patches.

use serde::{Deserialize, Serialize};

use crate::augmentation::AugTag;
use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::image::RgbImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub patch_size: usize,
    pub overlap_fraction: f64,
    pub edge_anchor: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            patch_size: 512,
            overlap_fraction: 0.5,
            edge_anchor: true,
        }
    }
}

impl GridSpec {
    pub fn new(patch_size: usize, overlap_fraction: f64) -> Result<Self> {
        let spec = Self {
            patch_size,
            overlap_fraction,
            edge_anchor: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::InvalidGrid("patch size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.overlap_fraction) {
            return Err(Error::InvalidGrid(format!(
                "overlap {} outside [0, 1)",
                self.overlap_fraction
            )));
        }
        if self.stride() == 0 {
            return Err(Error::InvalidGrid("stride rounds to zero".into()));
        }
        Ok(())
    }

    /// `round(P · (1 − overlap))`, halves rounded away from zero.
    pub fn stride(&self) -> usize {
        (self.patch_size as f64 * (1.0 - self.overlap_fraction)).round() as usize
    }

    /// Anchor coordinates along one axis of length `dim`.
    pub fn axis_anchors(&self, dim: usize) -> Vec<usize> {
        let p = self.patch_size;
        if dim < p {
            return Vec::new();
        }
        let span = dim - p;
        let stride = self.stride();
        let mut anchors: Vec<usize> = (0..=span).step_by(stride).collect();
        if self.edge_anchor && !span.is_multiple_of(stride) {
            anchors.push(span);
        }
        anchors
    }
}

/// Top-left corner of a patch in source-image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Anchor {
    pub x: usize,
    pub y: usize,
}

/// Row-major list of patch anchors for a `width`×`height` image.
pub fn compute_grid(width: usize, height: usize, spec: &GridSpec) -> Result<Vec<Anchor>> {
    spec.validate()?;
    if width < spec.patch_size || height < spec.patch_size {
        return Err(Error::DimensionTooSmall {
            width,
            height,
            patch_size: spec.patch_size,
        });
    }
    let xs = spec.axis_anchors(width);
    let ys = spec.axis_anchors(height);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| Anchor { x, y }))
        .collect())
}

/// Square crop of a source image together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub source_image_id: String,
    pub anchor: Anchor,
    pub pixels: RgbImage,
    pub label: ClassLabel,
    pub augmentation: AugTag,
}

impl Patch {
    /// File stem `{image_id}_{x}_{y}`, suffixed with the augmentation name
    /// for non-identity variants.
    pub fn file_stem(&self) -> String {
        patch_file_stem(&self.source_image_id, self.anchor, self.augmentation)
    }
}

pub fn patch_file_stem(image_id: &str, anchor: Anchor, aug: AugTag) -> String {
    match aug {
        AugTag::Identity => format!("{image_id}_{}_{}", anchor.x, anchor.y),
        other => format!("{image_id}_{}_{}_{}", anchor.x, anchor.y, other.name()),
    }
}

pub fn extract_patches(
    img: &RgbImage,
    image_id: &str,
    label: ClassLabel,
    spec: &GridSpec,
) -> Result<Vec<Patch>> {
    let p = spec.patch_size;
    compute_grid(img.width(), img.height(), spec)?
        .into_iter()
        .map(|anchor| {
            Ok(Patch {
                source_image_id: image_id.to_owned(),
                anchor,
                pixels: img.crop(anchor.x, anchor.y, p, p)?,
                label,
                augmentation: AugTag::Identity,
            })
        })
        .collect()
}
