//! Built-in stylization: per-channel Lab moment matching.

use crate::imaging::{lab_to_rgb, rgb_to_lab, ImageLab, ImageRgb};

/// Per-channel mean and population standard deviation in Lab.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabStats {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl LabStats {
    pub fn of(lab: &ImageLab) -> LabStats {
        let n = lab.pixels().len() as f64;
        let mut mean = [0.0; 3];
        for p in lab.pixels() {
            for c in 0..3 {
                mean[c] += p[c];
            }
        }
        mean = mean.map(|s| s / n);
        let mut var = [0.0; 3];
        for p in lab.pixels() {
            for c in 0..3 {
                var[c] += (p[c] - mean[c]).powi(2);
            }
        }
        LabStats {
            mean,
            std: var.map(|v| (v / n).sqrt()),
        }
    }
}

/// Moves each Lab channel of `content` toward the target moments
/// `μ = (1−s)·μ_c + s·μ_s`, `σ = (1−s)·σ_c + s·σ_s`. Channels with zero
/// spread become constant at `μ`.
pub fn color_transfer_lab_space(content: &ImageLab, style: &LabStats, strength: f64) -> ImageLab {
    assert!((0.0..=1.0).contains(&strength), "strength must lie in [0, 1]");
    let src = LabStats::of(content);
    let mix = |a: f64, b: f64| (1.0 - strength) * a + strength * b;
    let target_mean: [f64; 3] = std::array::from_fn(|c| mix(src.mean[c], style.mean[c]));
    let target_std: [f64; 3] = std::array::from_fn(|c| mix(src.std[c], style.std[c]));
    let pixels = content
        .pixels()
        .iter()
        .map(|p| {
            std::array::from_fn(|c| {
                if src.std[c] > 0.0 {
                    (p[c] - src.mean[c]) * (target_std[c] / src.std[c]) + target_mean[c]
                } else {
                    target_mean[c]
                }
            })
        })
        .collect();
    ImageLab::from_pixels(content.width(), content.height(), pixels)
}

/// Lab moment transfer in sRGB terms; out-of-gamut results are clamped.
pub fn color_transfer_lab(content: &ImageRgb, style: &ImageRgb, strength: f64) -> ImageRgb {
    if strength == 0.0 {
        return content.clone();
    }
    let stats = LabStats::of(&rgb_to_lab(style));
    lab_to_rgb(&color_transfer_lab_space(&rgb_to_lab(content), &stats, strength))
}
