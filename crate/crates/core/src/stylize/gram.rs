//! Gram-matrix style loss and the built-in feature extractor.

use rand::Rng;

use crate::imaging::ImageRgb;
use crate::seed::rng_for;

/// One layer of activations, stored channel-major (`c`, then `y`, then `x`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureLayer {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureLayer {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "layer size");
        assert!(channels > 0 && height > 0 && width > 0, "empty layer");
        FeatureLayer {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    fn row(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps {
    pub layers: Vec<FeatureLayer>,
}

/// Symmetric `c × c` matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub size: usize,
    pub data: Vec<f64>,
}

impl GramMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.size + j]
    }

    pub fn frobenius_distance(&self, other: &GramMatrix) -> f64 {
        assert_eq!(self.size, other.size, "gram sizes differ");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// `G = F·Fᵀ / (C·H·W)` with `F` the `C × HW` unrolled activations.
pub fn gram(layer: &FeatureLayer) -> GramMatrix {
    let c = layer.channels;
    let norm = (c * layer.height * layer.width) as f64;
    let mut data = vec![0.0; c * c];
    for i in 0..c {
        for j in i..c {
            let v: f64 = layer.row(i).iter().zip(layer.row(j)).map(|(a, b)| a * b).sum::<f64>() / norm;
            data[i * c + j] = v;
            data[j * c + i] = v;
        }
    }
    GramMatrix { size: c, data }
}

pub trait FeatureExtractor {
    fn extract(&self, img: &ImageRgb) -> FeatureMaps;
}

/// Content and style terms summed over layers:
/// `(Σ‖G(y) − G(y_c)‖, Σ‖G(y) − G(y_s)‖)`.
pub fn style_loss_terms(
    y: &ImageRgb,
    y_c: &ImageRgb,
    y_s: &ImageRgb,
    extractor: &dyn FeatureExtractor,
) -> (f64, f64) {
    let (f, fc, fs) = (extractor.extract(y), extractor.extract(y_c), extractor.extract(y_s));
    assert_eq!(f.layers.len(), fc.layers.len(), "extractor layer count");
    assert_eq!(f.layers.len(), fs.layers.len(), "extractor layer count");
    let mut content = 0.0;
    let mut style = 0.0;
    for ((l, lc), ls) in f.layers.iter().zip(&fc.layers).zip(&fs.layers) {
        let g = gram(l);
        content += g.frobenius_distance(&gram(lc));
        style += g.frobenius_distance(&gram(ls));
    }
    (content, style)
}

/// `(1 − λ)·Σ‖G(y) − G(y_c)‖ + λ·Σ‖G(y) − G(y_s)‖` with Frobenius norms.
pub fn style_loss(
    y: &ImageRgb,
    y_c: &ImageRgb,
    y_s: &ImageRgb,
    lambda_style: f64,
    extractor: &dyn FeatureExtractor,
) -> f64 {
    assert!((0.0..=1.0).contains(&lambda_style), "lambda must lie in [0, 1]");
    let (content, style) = style_loss_terms(y, y_c, y_s, extractor);
    (1.0 - lambda_style) * content + lambda_style * style
}

/// Fixed random 3×3 filters applied with valid convolution and ReLU at up to
/// three scales (the input, then repeated 2× average pooling).
#[derive(Clone, Debug)]
pub struct DefaultExtractor {
    /// `filters[k][c][dy][dx]`.
    filters: Vec<[[[f64; 3]; 3]; 3]>,
    scales: usize,
}

const EXTRACTOR_SEED: u64 = 0x5e_edf1_1e75;

impl Default for DefaultExtractor {
    fn default() -> Self {
        let mut rng = rng_for(EXTRACTOR_SEED, &[]);
        let filters = (0..8)
            .map(|_| std::array::from_fn(|_| std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)))))
            .collect();
        DefaultExtractor { filters, scales: 3 }
    }
}

impl DefaultExtractor {
    pub fn filters(&self) -> &[[[[f64; 3]; 3]; 3]] {
        &self.filters
    }
}

/// Channel-major planes of an RGB image.
fn planes(img: &ImageRgb) -> (usize, usize, Vec<f64>) {
    let (w, h) = img.dims();
    let mut data = vec![0.0; 3 * w * h];
    for (i, p) in img.pixels().iter().enumerate() {
        for c in 0..3 {
            data[c * w * h + i] = p[c] as f64;
        }
    }
    (w, h, data)
}

fn avg_pool(w: usize, h: usize, data: &[f64]) -> (usize, usize, Vec<f64>) {
    let (nw, nh) = (w / 2, h / 2);
    let mut out = vec![0.0; 3 * nw * nh];
    for c in 0..3 {
        for y in 0..nh {
            for x in 0..nw {
                let at = |dx: usize, dy: usize| data[c * w * h + (2 * y + dy) * w + 2 * x + dx];
                out[c * nw * nh + y * nw + x] = (at(0, 0) + at(1, 0) + at(0, 1) + at(1, 1)) / 4.0;
            }
        }
    }
    (nw, nh, out)
}

impl FeatureExtractor for DefaultExtractor {
    fn extract(&self, img: &ImageRgb) -> FeatureMaps {
        let (mut w, mut h, mut data) = planes(img);
        let mut layers = Vec::new();
        for scale in 0..self.scales {
            if scale > 0 {
                if w / 2 < 3 || h / 2 < 3 {
                    break;
                }
                (w, h, data) = avg_pool(w, h, &data);
            }
            if w < 3 || h < 3 {
                break;
            }
            let (ow, oh) = (w - 2, h - 2);
            let k = self.filters.len();
            let mut out = vec![0.0; k * ow * oh];
            for (f, filt) in self.filters.iter().enumerate() {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = 0.0;
                        for (c, fc) in filt.iter().enumerate() {
                            for (dy, row) in fc.iter().enumerate() {
                                for (dx, wt) in row.iter().enumerate() {
                                    acc += wt * data[c * w * h + (y + dy) * w + x + dx];
                                }
                            }
                        }
                        out[(f * oh + y) * ow + x] = acc.max(0.0);
                    }
                }
            }
            layers.push(FeatureLayer::new(k, oh, ow, out));
        }
        assert!(!layers.is_empty(), "image too small for the extractor (needs 3x3)");
        FeatureMaps { layers }
    }
}
