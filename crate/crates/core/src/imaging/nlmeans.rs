//! Non-local means denoising.
//!
//! Patch distance between pixels `p` and `q` is the Gaussian-weighted mean
//! squared color difference of their patches,
//! `d(p, q) = Σ_k w_k · mean_c (I(p+k) − I(q+k))²`, and the weight of `q` is
//! `exp(−max(d − 2σ², 0) / h²)`. Patch samples outside the image are
//! mirror-reflected; search candidates `q` are restricted to the image.

use super::ImageRgb;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NlMeansParams {
    /// Filter strength, in `[0, 1]` intensity units.
    pub h: f64,
    /// Patch side length (odd).
    pub patch: usize,
    /// Search window side length (odd).
    pub window: usize,
    /// Noise standard deviation subtracted from distances; 0 disables the offset.
    pub sigma: f64,
}

impl NlMeansParams {
    pub fn new(h: f64, patch: usize, window: usize) -> Self {
        NlMeansParams {
            h,
            patch,
            window,
            sigma: 0.0,
        }
    }
}

/// Normalized 2-D Gaussian patch weights as a separable 1-D factor.
///
/// The spatial σ is half the patch radius (at least 0.5).
pub fn patch_weights(patch: usize) -> Vec<f64> {
    let r = (patch / 2) as isize;
    let s = (r as f64 / 2.0).max(0.5);
    let raw: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * s * s)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m > n as isize - 1 { period - m } else { m }) as usize
}

pub fn nl_means_denoise(img: &ImageRgb, params: &NlMeansParams) -> ImageRgb {
    assert!(params.h > 0.0, "h must be positive");
    assert!(params.patch % 2 == 1 && params.window % 2 == 1, "patch and window must be odd");

    let (w, h) = img.dims();
    let pr = (params.patch / 2) as isize;
    let sr = (params.window / 2) as isize;
    let taps = patch_weights(params.patch);
    let h2 = params.h * params.h;
    let offset = 2.0 * params.sigma * params.sigma;

    let px: Vec<[f64; 3]> = img.pixels().iter().map(|p| p.map(f64::from)).collect();
    let at = |x: isize, y: isize| px[reflect(y, h) * w + reflect(x, w)];

    // padded extent covers every patch sample of every pixel
    let pw = w + 2 * pr as usize;
    let ph = h + 2 * pr as usize;

    let mut wsum = vec![0.0f64; w * h];
    let mut acc = vec![[0.0f64; 3]; w * h];
    let mut diff = vec![0.0f64; pw * ph];
    let mut rows = vec![0.0f64; w * ph];

    for oy in -sr..=sr {
        for ox in -sr..=sr {
            for py in 0..ph {
                let sy = py as isize - pr;
                for pxi in 0..pw {
                    let sx = pxi as isize - pr;
                    let a = at(sx, sy);
                    let b = at(sx + ox, sy + oy);
                    let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)) / 3.0;
                    diff[py * pw + pxi] = d;
                }
            }
            // horizontal pass: rows[py][x] = Σ_kx w_kx diff[py][x + kx]
            for py in 0..ph {
                for x in 0..w {
                    let base = py * pw + x;
                    rows[py * w + x] = taps.iter().enumerate().map(|(k, t)| t * diff[base + k]).sum();
                }
            }
            for y in 0..h {
                let qy = y as isize + oy;
                if qy < 0 || qy >= h as isize {
                    continue;
                }
                for x in 0..w {
                    let qx = x as isize + ox;
                    if qx < 0 || qx >= w as isize {
                        continue;
                    }
                    let d: f64 = taps
                        .iter()
                        .enumerate()
                        .map(|(k, t)| t * rows[(y + k) * w + x])
                        .sum();
                    let wt = (-(d - offset).max(0.0) / h2).exp();
                    let q = px[qy as usize * w + qx as usize];
                    let i = y * w + x;
                    wsum[i] += wt;
                    acc[i][0] += wt * q[0];
                    acc[i][1] += wt * q[1];
                    acc[i][2] += wt * q[2];
                }
            }
        }
    }

    let data = acc
        .iter()
        .zip(&wsum)
        .map(|(a, &s)| a.map(|v| (v / s).clamp(0.0, 1.0) as f32))
        .collect();
    ImageRgb::from_pixels(w, h, data).expect("weighted mean of valid pixels")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(3, 1), 0);
    }

    #[test]
    fn weights_normalized() {
        for p in [1, 3, 5, 7] {
            let t = patch_weights(p);
            assert_eq!(t.len(), p);
            assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_image_unchanged() {
        let img = ImageRgb::filled(12, 9, [0.3, 0.6, 0.1]);
        let out = nl_means_denoise(&img, &NlMeansParams::new(0.1, 3, 7));
        for (a, b) in out.pixels().iter().zip(img.pixels()) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn tiny_h_returns_input() {
        let img = ImageRgb::from_fn(10, 10, |x, y| {
            let v = ((x * x * 31 + y * 17 + x * y * 7) % 101) as f32 / 100.0;
            [v, 1.0 - v, 0.5]
        });
        let out = nl_means_denoise(&img, &NlMeansParams::new(1e-4, 3, 5));
        assert_eq!(out, img);
    }
}
