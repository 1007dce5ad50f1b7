//! In-memory 8-bit RGB raster and lossless PNG persistence.

use std::path::Path;

use crate::error::{Error, Result};

/// Row-major H×W grid of 3-channel 8-bit pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    /// Wraps an interleaved `RGBRGB...` buffer.
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidDimensions { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(Error::PixelBufferSize {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image filled with a single color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self::from_raw(width, height, data)
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    /// Copies the `size_w`×`size_h` rectangle whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, size_w: usize, size_h: usize) -> Result<Self> {
        if x + size_w > self.width || y + size_h > self.height {
            return Err(Error::DimensionTooSmall {
                width: self.width,
                height: self.height,
                patch_size: size_w.max(size_h),
            });
        }
        let mut data = Vec::with_capacity(size_w * size_h * 3);
        for row in y..y + size_h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + size_w * 3]);
        }
        Self::from_raw(size_w, size_h, data)
    }

    /// Bilinear resampling with half-pixel centers, returning channel values
    /// as reals in `[0, 255]` (planar layout: all R, then G, then B).
    pub fn resize_bilinear_planar(&self, out_w: usize, out_h: usize) -> Vec<f64> {
        let plane = out_w * out_h;
        let mut out = vec![0.0; plane * 3];
        let sx = self.width as f64 / out_w as f64;
        let sy = self.height as f64 / out_h as f64;
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        for oy in 0..out_h {
            let fy = ((oy as f64 + 0.5) * sy - 0.5).clamp(0.0, max_y);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(self.height - 1);
            let wy = fy - y0 as f64;
            for ox in 0..out_w {
                let fx = ((ox as f64 + 0.5) * sx - 0.5).clamp(0.0, max_x);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(self.width - 1);
                let wx = fx - x0 as f64;
                let (p00, p10) = (self.pixel(x0, y0), self.pixel(x1, y0));
                let (p01, p11) = (self.pixel(x0, y1), self.pixel(x1, y1));
                for c in 0..3 {
                    let top = p00[c] as f64 * (1.0 - wx) + p10[c] as f64 * wx;
                    let bottom = p01[c] as f64 * (1.0 - wx) + p11[c] as f64 * wx;
                    out[c * plane + oy * out_w + ox] = top * (1.0 - wy) + bottom * wy;
                }
            }
        }
        out
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let decoded = image::open(path)
            .map_err(|source| Error::Image {
                path: path.to_path_buf(),
                source,
            })?
            .into_rgb8();
        let (w, h) = decoded.dimensions();
        Self::from_raw(w as usize, h as usize, decoded.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        image::save_buffer_with_format(
            path,
            &self.data,
            self.width as u32,
            self.height as u32,
            image::ExtendedColorType::Rgb8,
            image::ImageFormat::Png,
        )
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}
