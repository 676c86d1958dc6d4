//! Real-valued image buffers, color conversion, filtering and mask algebra.
//!
//! Pixels are stored as `f32` in `[0, 1]`. Conversion to 8-bit happens only
//! in [`io`].

mod color;
mod filter;
pub mod io;
mod morph;
mod nlmeans;
mod transform;

pub use color::{lab_distance, lab_to_rgb, lab_to_srgb_pixel, rgb_to_lab, srgb_to_lab_pixel};
pub use filter::{gaussian_blur, gaussian_kernel, unsharp_mask};
pub use morph::{dilate, disk_offsets};
pub use nlmeans::{nl_means_denoise, patch_weights, NlMeansParams};
pub use transform::{rotate_flip_mask, rotate_flip_rgba, rotated_canvas_size, Geometry};
pub(crate) use transform::{sample_mask, sample_rgb};

use crate::error::{Error, Result};

/// An sRGB image with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<[f32; 3]>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, color: [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        ImageRgb {
            width,
            height,
            data: vec![color; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ImageRgb {
            width,
            height,
            data,
        }
    }

    /// Builds an image from raw pixels, rejecting non-finite or out-of-range values.
    pub fn from_pixels(width: usize, height: usize, data: Vec<[f32; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} pixels, got {}",
                width * height,
                data.len()
            )));
        }
        if data
            .iter()
            .flatten()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(Error::InvalidArgument("channel values must be finite and in [0,1]".into()));
        }
        Ok(ImageRgb {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [f32; 3]) {
        self.data[y * self.width + x] = px;
    }

    pub fn pixels(&self) -> &[[f32; 3]] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [[f32; 3]] {
        &mut self.data
    }

    /// Copies out the rectangle `[x0, x0+w) × [y0, y0+h)`; must lie inside the image.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> ImageRgb {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        ImageRgb::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }

    /// Copies one channel out as a plane.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data.iter().map(|p| p[c]).collect()
    }
}

/// A CIELab image (D65). `L` in `[0, 100]`, `a`/`b` roughly in `[-128, 128]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageLab {
    width: usize,
    height: usize,
    data: Vec<[f64; 3]>,
}

impl ImageLab {
    pub fn from_pixels(width: usize, height: usize, data: Vec<[f64; 3]>) -> Self {
        assert_eq!(data.len(), width * height);
        ImageLab {
            width,
            height,
            data,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        ImageLab {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    pub fn pixels(&self) -> &[[f64; 3]] {
        &self.data
    }
}

/// Single-channel mask with values in `[0, 1]`; binary masks use `{0, 1}` only.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Mask {
    pub fn zeros(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            data: vec![1.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Mask {
            width,
            height,
            data,
        }
    }

    pub fn from_values(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} mask values, got {}",
                width * height,
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("mask values must lie in [0,1]".into()));
        }
        Ok(Mask {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    /// Number of pixels with a nonzero value.
    pub fn support(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0.0).count()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum()
    }

    /// `1` where the value exceeds `t`, else `0`.
    pub fn threshold(&self, t: f32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v > t { 1.0 } else { 0.0 }).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Tight bounding rectangle `(x, y, w, h)` of the nonzero pixels.
    pub fn tight_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) > 0.0 {
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        (x0 != usize::MAX).then(|| (x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Mask {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        Mask::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }
}

/// Elementwise product of two masks.
pub fn hadamard(a: &Mask, b: &Mask) -> Result<Mask> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            got: b.dims(),
        });
    }
    Ok(Mask {
        width: a.width,
        height: a.height,
        data: a.data.iter().zip(&b.data).map(|(x, y)| x * y).collect(),
    })
}

/// Color data plus an alpha mask of identical dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbaFragment {
    color: ImageRgb,
    alpha: Mask,
}

impl RgbaFragment {
    pub fn new(color: ImageRgb, alpha: Mask) -> Result<Self> {
        if color.dims() != alpha.dims() {
            return Err(Error::DimensionMismatch {
                expected: color.dims(),
                got: alpha.dims(),
            });
        }
        Ok(RgbaFragment { color, alpha })
    }

    pub fn color(&self) -> &ImageRgb {
        &self.color
    }

    pub fn alpha(&self) -> &Mask {
        &self.alpha
    }

    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.color.dims()
    }

    pub fn into_parts(self) -> (ImageRgb, Mask) {
        (self.color, self.alpha)
    }
}
