//! Reinhard color-statistics stain normalization in the lαβ space.
//!
//! Forward chain per pixel: RGB scaled to `[0, 1]` → LMS (3×3 matrix) →
//! `log10` with a floor of `1/255` → lαβ via the orthonormal decorrelation
//!
//! ```text
//! l = (L + M + S) / √3
//! α = (L + M − 2S) / √6
//! β = (L − M) / √2
//! ```
//!
//! The inverse undoes each step, exponentiates, rescales to `[0, 255]`,
//! clamps and rounds half away from zero.
//!
//! Statistics use the population (divide-by-N) convention, and standard
//! deviations are floored at [`STD_FLOOR`].

use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::RgbImage;

/// Minimum LMS value admitted to the logarithm.
pub const LMS_FLOOR: f64 = 1.0 / 255.0;

/// Minimum standard deviation reported by [`channel_stats`].
pub const STD_FLOOR: f64 = 1e-6;

/// Reinhard's RGB→LMS coefficients with each row rescaled to sum to one, so
/// that achromatic RGB maps to equal LMS components.
static RGB_TO_LMS: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| {
    const RAW: [[f64; 3]; 3] = [
        [0.3811, 0.5783, 0.0402],
        [0.1967, 0.7244, 0.0782],
        [0.0241, 0.1288, 0.8444],
    ];
    RAW.map(|row| {
        let s: f64 = row.iter().sum();
        row.map(|v| v / s)
    })
});

static LMS_TO_RGB: LazyLock<[[f64; 3]; 3]> = LazyLock::new(|| invert3(&RGB_TO_LMS));

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    adj.map(|row| row.map(|v| v / det))
}

#[inline]
fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Converts one 8-bit RGB triple to `[l, α, β]`.
pub fn rgb_pixel_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let scaled = rgb.map(|c| c as f64 / 255.0);
    let [l, m, s] = mat_vec(&RGB_TO_LMS, scaled).map(|v| v.max(LMS_FLOOR).log10());
    [
        (l + m + s) / 3f64.sqrt(),
        (l + m - 2.0 * s) / 6f64.sqrt(),
        (l - m) / 2f64.sqrt(),
    ]
}

/// Converts `[l, α, β]` back to a clamped, rounded 8-bit RGB triple.
pub fn lab_pixel_to_rgb(lab: [f64; 3]) -> [u8; 3] {
    let [l, a, b] = lab;
    let l3 = l / 3f64.sqrt();
    let a6 = a / 6f64.sqrt();
    let b2 = b / 2f64.sqrt();
    let log_lms = [l3 + a6 + b2, l3 + a6 - b2, l3 - 2.0 * a6];
    let lms = log_lms.map(|v| 10f64.powf(v));
    mat_vec(&LMS_TO_RGB, lms).map(|v| {
        let v = (v * 255.0).clamp(0.0, 255.0);
        if v.is_nan() {
            0
        } else {
            v.round() as u8
        }
    })
}

/// Image in lαβ space, stored as three planes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl LabImage {
    pub fn from_planes(width: usize, height: usize, planes: [Vec<f64>; 3]) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        let n = width * height;
        if let Some(p) = planes.iter().find(|p| p.len() != n) {
            return Err(Error::PixelBufferSize {
                expected: n,
                actual: p.len(),
            });
        }
        Ok(Self {
            width,
            height,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Plane `0` is l, `1` is α, `2` is β.
    pub fn plane(&self, channel: usize) -> &[f64] {
        &self.planes[channel]
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = y * self.width + x;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }
}

/// Per-channel mean and standard deviation in lαβ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl LabStats {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let stats: LabStats = serde_json::from_str(s)?;
        if stats.mean.iter().chain(&stats.std).any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("non-finite lab statistics".into()));
        }
        Ok(LabStats {
            mean: stats.mean,
            std: stats.std.map(|s| s.max(STD_FLOOR)),
        })
    }
}

pub fn rgb_to_lab(img: &RgbImage) -> LabImage {
    let n = img.pixel_count();
    let mut planes = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    for px in img.pixels() {
        let lab = rgb_pixel_to_lab(px);
        for (plane, v) in planes.iter_mut().zip(lab) {
            plane.push(v);
        }
    }
    LabImage {
        width: img.width(),
        height: img.height(),
        planes,
    }
}

pub fn lab_to_rgb(img: &LabImage) -> RgbImage {
    let n = img.width * img.height;
    let mut data = Vec::with_capacity(n * 3);
    for i in 0..n {
        let lab = [img.planes[0][i], img.planes[1][i], img.planes[2][i]];
        data.extend_from_slice(&lab_pixel_to_rgb(lab));
    }
    RgbImage::from_raw(img.width, img.height, data).expect("dimensions carried over")
}

/// Population mean and standard deviation per channel (Welford update).
pub fn channel_stats(img: &LabImage) -> LabStats {
    let mut mean = [0.0; 3];
    let mut std = [0.0; 3];
    for c in 0..3 {
        let (mut mu, mut m2) = (0.0f64, 0.0f64);
        for (k, &v) in img.planes[c].iter().enumerate() {
            let delta = v - mu;
            mu += delta / (k + 1) as f64;
            m2 += delta * (v - mu);
        }
        let n = img.planes[c].len() as f64;
        mean[c] = mu;
        std[c] = (m2 / n).max(0.0).sqrt().max(STD_FLOOR);
    }
    LabStats { mean, std }
}

/// Statistics of a reference image, used as the normalization target.
pub fn reference_stats(img: &RgbImage) -> LabStats {
    channel_stats(&rgb_to_lab(img))
}

/// Maps each lαβ channel of `source` affinely onto the target mean and
/// standard deviation, then converts back to RGB.
pub fn normalize_stains(source: &RgbImage, target: &LabStats) -> RgbImage {
    let lab = rgb_to_lab(source);
    let src = channel_stats(&lab);
    let planes: [Vec<f64>; 3] = std::array::from_fn(|c| {
        let scale = target.std[c] / src.std[c].max(STD_FLOOR);
        lab.planes[c]
            .iter()
            .map(|&v| (v - src.mean[c]) * scale + target.mean[c])
            .collect()
    });
    lab_to_rgb(&LabImage {
        width: lab.width,
        height: lab.height,
        planes,
    })
}
