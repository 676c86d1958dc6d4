//! Rotation and flipping of RGBA fragments and their companion masks.
//!
//! Positive angles rotate counter-clockwise as displayed (y axis down). The
//! output canvas is the smallest integer rectangle containing the rotated
//! input; uncovered pixels get alpha 0. Multiples of 90° are exact index
//! permutations. Flips are applied after rotation.

use super::{ImageRgb, Mask, RgbaFragment};

/// Output size of a `w × h` image rotated by `angle_deg`.
pub fn rotated_canvas_size(w: usize, h: usize, angle_deg: f64) -> (usize, usize) {
    if let Some(q) = quarter_turns(angle_deg) {
        return if q % 2 == 0 { (w, h) } else { (h, w) };
    }
    let t = angle_deg.to_radians();
    let (c, s) = (t.cos().abs(), t.sin().abs());
    let fit = |v: f64| ((v - 1e-9).ceil() as usize).max(1);
    (fit(w as f64 * c + h as f64 * s), fit(w as f64 * s + h as f64 * c))
}

fn quarter_turns(angle_deg: f64) -> Option<u8> {
    let a = angle_deg.rem_euclid(360.0);
    let q = (a / 90.0).round();
    ((a - q * 90.0).abs() < 1e-12).then_some((q as u8) % 4)
}

/// Destination → source mapping for one rotate+flip transform.
#[derive(Clone, Copy, Debug)]
pub struct Geometry {
    src: (usize, usize),
    dst: (usize, usize),
    cos: f64,
    sin: f64,
    quarter: Option<u8>,
    flip_h: bool,
    flip_v: bool,
}

impl Geometry {
    pub fn new(src_w: usize, src_h: usize, angle_deg: f64, flip_h: bool, flip_v: bool) -> Self {
        let t = angle_deg.to_radians();
        Geometry {
            src: (src_w, src_h),
            dst: rotated_canvas_size(src_w, src_h, angle_deg),
            cos: t.cos(),
            sin: t.sin(),
            quarter: quarter_turns(angle_deg),
            flip_h,
            flip_v,
        }
    }

    pub fn output_size(&self) -> (usize, usize) {
        self.dst
    }

    fn unflip(&self, x: usize, y: usize) -> (usize, usize) {
        let (w, h) = self.dst;
        (
            if self.flip_h { w - 1 - x } else { x },
            if self.flip_v { h - 1 - y } else { y },
        )
    }

    /// Exact source pixel for right-angle rotations.
    fn exact_source(&self, x: usize, y: usize) -> Option<(usize, usize)> {
        let q = self.quarter?;
        let (x, y) = self.unflip(x, y);
        let (w, h) = self.src;
        Some(match q {
            0 => (x, y),
            1 => (w - 1 - y, x),
            2 => (w - 1 - x, h - 1 - y),
            _ => (y, h - 1 - x),
        })
    }

    /// Continuous source coordinate of destination pixel `(x, y)`.
    pub fn source_point(&self, x: usize, y: usize) -> (f64, f64) {
        let (x, y) = self.unflip(x, y);
        let u = x as f64 - (self.dst.0 as f64 - 1.0) / 2.0;
        let v = y as f64 - (self.dst.1 as f64 - 1.0) / 2.0;
        let dx = u * self.cos - v * self.sin;
        let dy = u * self.sin + v * self.cos;
        (
            dx + (self.src.0 as f64 - 1.0) / 2.0,
            dy + (self.src.1 as f64 - 1.0) / 2.0,
        )
    }
}

/// Bilinear taps `(x, y, weight)` of the in-bounds neighbors of `(sx, sy)`.
fn bilinear_taps(w: usize, h: usize, sx: f64, sy: f64) -> impl Iterator<Item = (usize, usize, f64)> {
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as isize, y0 as isize);
    [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ]
    .into_iter()
    .filter(move |&(x, y, wt)| wt > 0.0 && x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h)
    .map(|(x, y, wt)| (x as usize, y as usize, wt))
}

/// Samples a mask bilinearly, treating outside pixels as 0.
pub(crate) fn sample_mask(mask: &Mask, sx: f64, sy: f64) -> f64 {
    bilinear_taps(mask.width(), mask.height(), sx, sy)
        .map(|(x, y, wt)| wt * mask.get(x, y) as f64)
        .sum()
}

/// Samples an image bilinearly; `None` when the point is outside the pixel-center hull.
pub(crate) fn sample_rgb(img: &ImageRgb, sx: f64, sy: f64) -> Option<[f32; 3]> {
    let (w, h) = img.dims();
    if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
        return None;
    }
    let mut acc = [0.0f64; 3];
    for (x, y, wt) in bilinear_taps(w, h, sx, sy) {
        let p = img.get(x, y);
        for c in 0..3 {
            acc[c] += wt * p[c] as f64;
        }
    }
    Some(acc.map(|v| v.clamp(0.0, 1.0) as f32))
}

pub fn rotate_flip_mask(mask: &Mask, angle_deg: f64, flip_h: bool, flip_v: bool) -> Mask {
    let g = Geometry::new(mask.width(), mask.height(), angle_deg, flip_h, flip_v);
    let (w, h) = g.output_size();
    Mask::from_fn(w, h, |x, y| match g.exact_source(x, y) {
        Some((sx, sy)) => mask.get(sx, sy),
        None => {
            let (sx, sy) = g.source_point(x, y);
            sample_mask(mask, sx, sy).clamp(0.0, 1.0) as f32
        }
    })
}

/// Rotates then flips a fragment. Color is resampled premultiplied by alpha.
pub fn rotate_flip_rgba(frag: &RgbaFragment, angle_deg: f64, flip_h: bool, flip_v: bool) -> RgbaFragment {
    let (color, alpha) = (frag.color(), frag.alpha());
    let g = Geometry::new(frag.width(), frag.height(), angle_deg, flip_h, flip_v);
    let (w, h) = g.output_size();
    let mut out_color = ImageRgb::new(w, h);
    let mut out_alpha = Mask::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            if let Some((sx, sy)) = g.exact_source(x, y) {
                out_color.set(x, y, color.get(sx, sy));
                out_alpha.set(x, y, alpha.get(sx, sy));
                continue;
            }
            let (sx, sy) = g.source_point(x, y);
            let mut a = 0.0f64;
            let mut premul = [0.0f64; 3];
            let mut plain = [0.0f64; 3];
            let mut wsum = 0.0f64;
            for (tx, ty, wt) in bilinear_taps(frag.width(), frag.height(), sx, sy) {
                let av = alpha.get(tx, ty) as f64;
                let p = color.get(tx, ty);
                a += wt * av;
                wsum += wt;
                for c in 0..3 {
                    premul[c] += wt * av * p[c] as f64;
                    plain[c] += wt * p[c] as f64;
                }
            }
            let px = if a > 1e-12 {
                premul.map(|v| (v / a).clamp(0.0, 1.0) as f32)
            } else if wsum > 0.0 {
                plain.map(|v| (v / wsum).clamp(0.0, 1.0) as f32)
            } else {
                [0.0; 3]
            };
            out_color.set(x, y, px);
            out_alpha.set(x, y, a.clamp(0.0, 1.0) as f32);
        }
    }
    RgbaFragment::new(out_color, out_alpha).expect("same geometry for both planes")
}
