//! 8-bit PNG boundary.

use std::path::Path;

use image::{ImageBuffer, Rgb, Rgba};

use super::{ImageRgb, Mask, RgbaFragment};
use crate::error::{Error, Result};

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[inline]
pub fn from_u8(v: u8) -> f32 {
    v as f32 / 255.0
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn to_rgb8(img: &ImageRgb) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
    ImageBuffer::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Rgb(img.get(x as usize, y as usize).map(to_u8))
    })
}

pub fn from_rgb8(buf: &ImageBuffer<Rgb<u8>, Vec<u8>>) -> ImageRgb {
    ImageRgb::from_fn(buf.width() as usize, buf.height() as usize, |x, y| {
        buf.get_pixel(x as u32, y as u32).0.map(from_u8)
    })
}

/// Reads any PNG as RGB, dropping alpha.
pub fn read_rgb(path: &Path) -> Result<ImageRgb> {
    let img = image::open(path).map_err(|e| image_err(path, e))?;
    Ok(from_rgb8(&img.to_rgb8()))
}

pub fn write_rgb(path: &Path, img: &ImageRgb) -> Result<()> {
    to_rgb8(img)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}

pub fn read_rgba(path: &Path) -> Result<RgbaFragment> {
    let img = image::open(path).map_err(|e| image_err(path, e))?.to_rgba8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let color = ImageRgb::from_fn(w, h, |x, y| {
        let p = img.get_pixel(x as u32, y as u32).0;
        [from_u8(p[0]), from_u8(p[1]), from_u8(p[2])]
    });
    let alpha = Mask::from_fn(w, h, |x, y| from_u8(img.get_pixel(x as u32, y as u32).0[3]));
    RgbaFragment::new(color, alpha)
}

pub fn write_rgba(path: &Path, frag: &RgbaFragment) -> Result<()> {
    let (color, alpha) = (frag.color(), frag.alpha());
    let buf: ImageBuffer<Rgba<u8>, Vec<u8>> =
        ImageBuffer::from_fn(frag.width() as u32, frag.height() as u32, |x, y| {
            let (x, y) = (x as usize, y as usize);
            let [r, g, b] = color.get(x, y).map(to_u8);
            Rgba([r, g, b, to_u8(alpha.get(x, y))])
        });
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| image_err(path, e))
}
