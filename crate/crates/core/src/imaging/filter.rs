use super::ImageRgb;

/// Normalized 1-D Gaussian taps for `sigma`, truncated at `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

fn convolve_axis(src: &[[f64; 3]], w: usize, h: usize, taps: &[f64], horizontal: bool) -> Vec<[f64; 3]> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![[0.0; 3]; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0.0; 3];
            for (k, &t) in taps.iter().enumerate() {
                let d = k as isize - r;
                // edge pixels are replicated
                let (sx, sy) = if horizontal {
                    ((x as isize + d).clamp(0, w as isize - 1) as usize, y)
                } else {
                    (x, (y as isize + d).clamp(0, h as isize - 1) as usize)
                };
                let p = src[sy * w + sx];
                acc[0] += t * p[0];
                acc[1] += t * p[1];
                acc[2] += t * p[2];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn blur_f64(img: &ImageRgb, sigma: f64) -> Vec<[f64; 3]> {
    let taps = gaussian_kernel(sigma);
    let (w, h) = img.dims();
    let src: Vec<[f64; 3]> = img.pixels().iter().map(|p| p.map(f64::from)).collect();
    let tmp = convolve_axis(&src, w, h, &taps, true);
    convolve_axis(&tmp, w, h, &taps, false)
}

/// Separable Gaussian blur with standard deviation `sigma` and replicated borders.
pub fn gaussian_blur(img: &ImageRgb, sigma: f64) -> ImageRgb {
    let blurred = blur_f64(img, sigma);
    let data = blurred
        .into_iter()
        .map(|p| p.map(|v| v.clamp(0.0, 1.0) as f32))
        .collect();
    ImageRgb::from_pixels(img.width(), img.height(), data).expect("blur preserves range")
}

/// `clamp(img + amount · (img − blur(img, radius)))`.
pub fn unsharp_mask(img: &ImageRgb, radius: f64, amount: f64) -> ImageRgb {
    assert!(radius > 0.0 && amount >= 0.0, "unsharp mask needs radius > 0, amount >= 0");
    if amount == 0.0 {
        return img.clone();
    }
    let blurred = blur_f64(img, radius);
    let data = img
        .pixels()
        .iter()
        .zip(blurred)
        .map(|(p, b)| {
            [0, 1, 2].map(|c| {
                let v = p[c] as f64;
                (v + amount * (v - b[c])).clamp(0.0, 1.0) as f32
            })
        })
        .collect();
    ImageRgb::from_pixels(img.width(), img.height(), data).expect("clamped")
}
