//! The six-variant rigid augmentation set: identity, three rotations and
//! two mirror flips.
//!
//! Rotations are counter-clockwise. For an `n`×`n` grid indexed
//! `[row][col]`:
//!
//! ```text
//! rot90:  out[i][j] = in[j][n-1-i]
//! rot180: out[i][j] = in[n-1-i][n-1-j]
//! rot270: out[i][j] = in[n-1-j][i]
//! hflip:  out[i][j] = in[i][n-1-j]     (mirror left/right)
//! vflip:  out[i][j] = in[n-1-i][j]     (mirror top/bottom)
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;
use crate::tiling::Patch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AugTag {
    Identity,
    Rot90,
    Rot180,
    Rot270,
    Hflip,
    Vflip,
}

impl AugTag {
    /// Fixed output order of [`augment_all`].
    pub const ALL: [AugTag; 6] = [
        AugTag::Identity,
        AugTag::Rot90,
        AugTag::Rot180,
        AugTag::Rot270,
        AugTag::Hflip,
        AugTag::Vflip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugTag::Identity => "identity",
            AugTag::Rot90 => "rot90",
            AugTag::Rot180 => "rot180",
            AugTag::Rot270 => "rot270",
            AugTag::Hflip => "hflip",
            AugTag::Vflip => "vflip",
        }
    }

    /// Source coordinate `(row, col)` feeding output `(i, j)` on an `n`-grid.
    #[inline]
    fn source_index(self, i: usize, j: usize, n: usize) -> (usize, usize) {
        match self {
            AugTag::Identity => (i, j),
            AugTag::Rot90 => (j, n - 1 - i),
            AugTag::Rot180 => (n - 1 - i, n - 1 - j),
            AugTag::Rot270 => (n - 1 - j, i),
            AugTag::Hflip => (i, n - 1 - j),
            AugTag::Vflip => (n - 1 - i, j),
        }
    }
}

impl fmt::Display for AugTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AugTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AugTag::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("unknown augmentation {s:?}"),
            })
    }
}

/// Applies one isometry to a square pixel grid.
pub fn transform_image(img: &RgbImage, tag: AugTag) -> Result<RgbImage> {
    let n = img.width();
    if img.height() != n {
        return Err(Error::NotSquare {
            width: img.width(),
            height: img.height(),
        });
    }
    RgbImage::from_fn(n, n, |j, i| {
        let (si, sj) = tag.source_index(i, j, n);
        img.pixel(sj, si)
    })
}

/// Transforms the pixels of `patch` and records `tag` as its augmentation.
/// Composition is on pixels only: the tag of the result is `tag`.
pub fn apply(patch: &Patch, tag: AugTag) -> Result<Patch> {
    Ok(Patch {
        source_image_id: patch.source_image_id.clone(),
        anchor: patch.anchor,
        pixels: transform_image(&patch.pixels, tag)?,
        label: patch.label,
        augmentation: tag,
    })
}

/// Six variants per input patch, in input order then [`AugTag::ALL`] order.
pub fn augment_all(patches: &[Patch]) -> Result<Vec<Patch>> {
    let mut out = Vec::with_capacity(patches.len() * AugTag::ALL.len());
    for p in patches {
        for tag in AugTag::ALL {
            out.push(apply(p, tag)?);
        }
    }
    Ok(out)
}
