//! sRGB ↔ CIELab (D65) conversion.

use super::{ImageLab, ImageRgb};

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_SRGB: [[f64; 3]; 3] = [
    [3.2404548360214087, -1.5371388501025751, -0.498531546868481],
    [-0.9692663898756538, 1.876010928842491, 0.041556082346673545],
    [0.05564341960421367, -0.20402585426769818, 1.057225162457929],
];

// CIE constants: ε = 216/24389, κ = 24389/27
const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

/// Reference white: the XYZ image of sRGB (1, 1, 1), so white maps to a = b = 0 exactly.
fn white() -> [f64; 3] {
    let m = &SRGB_TO_XYZ;
    [
        m[0][0] + m[0][1] + m[0][2],
        m[1][0] + m[1][1] + m[1][2],
        m[2][0] + m[2][1] + m[2][2],
    ]
}

#[inline]
fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

#[inline]
fn lab_f_inv(f: f64) -> f64 {
    let f3 = f * f * f;
    if f3 > EPSILON {
        f3
    } else {
        (116.0 * f - 16.0) / KAPPA
    }
}

pub fn srgb_to_lab_pixel(rgb: [f64; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let w = white();
    let m = &SRGB_TO_XYZ;
    let xyz = [0, 1, 2].map(|r| (m[r][0] * lin[0] + m[r][1] * lin[1] + m[r][2] * lin[2]) / w[r]);
    let [fx, fy, fz] = xyz.map(lab_f);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Inverse of [`srgb_to_lab_pixel`]; out-of-gamut results are clamped to `[0, 1]`.
pub fn lab_to_srgb_pixel(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let w = white();
    // L is defined through Y directly, which keeps dark values exact.
    let yr = if lab[0] > KAPPA * EPSILON {
        fy * fy * fy
    } else {
        lab[0] / KAPPA
    };
    let xyz = [lab_f_inv(fx) * w[0], yr * w[1], lab_f_inv(fz) * w[2]];
    let m = &XYZ_TO_SRGB;
    [0, 1, 2].map(|r| {
        let lin = m[r][0] * xyz[0] + m[r][1] * xyz[1] + m[r][2] * xyz[2];
        linear_to_srgb(lin.max(0.0)).clamp(0.0, 1.0)
    })
}

pub fn rgb_to_lab(img: &ImageRgb) -> ImageLab {
    let data = img
        .pixels()
        .iter()
        .map(|p| srgb_to_lab_pixel(p.map(f64::from)))
        .collect();
    ImageLab::from_pixels(img.width(), img.height(), data)
}

pub fn lab_to_rgb(img: &ImageLab) -> ImageRgb {
    let data = img
        .pixels()
        .iter()
        .map(|p| lab_to_srgb_pixel(*p).map(|v| v as f32))
        .collect();
    ImageRgb::from_pixels(img.width(), img.height(), data)
        .expect("clamped conversion always yields valid pixels")
}

/// Euclidean distance in Lab (CIE76 ΔE).
#[inline]
pub fn lab_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
