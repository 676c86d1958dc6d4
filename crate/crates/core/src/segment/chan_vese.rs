//! Two-phase piecewise-constant Chan–Vese segmentation.
//!
//! The level set φ starts from a checkerboard `sin(πx/5)·sin(πy/5)` and
//! evolves with the semi-implicit scheme of Chan & Vese (λ1 = λ2 = 1,
//! regularized Heaviside of width 1, time step 0.5). The inside/outside means
//! are recomputed every iteration.
//!
//! The semi-implicit step descends the *regularized* energy, so the discrete
//! energy of the binary region `{φ > 0}` may tick up now and then. Every
//! iterate is scored with [`energy`]; an iterate is accepted when its energy
//! does not exceed the best so far, and the last accepted region is returned.

use crate::imaging::Mask;

const TIME_STEP: f64 = 0.5;
const HEAVISIDE_EPS: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct ChanVeseOutcome {
    /// Foreground after phase disambiguation (binary).
    pub mask: Mask,
    /// Energies of the initialization and of every accepted iterate, in order.
    pub accepted_energies: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Definitional energy of a binary partition:
/// `μ · |∂Ω| + Σ_Ω (I − c1)² + Σ_Ωᶜ (I − c2)²`, where `|∂Ω|` counts
/// 4-neighbor pixel pairs with different labels.
pub fn energy(gray: &[f64], w: usize, h: usize, inside: &[bool], mu: f64) -> f64 {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &m) in gray.iter().zip(inside) {
        if m {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    let c1 = if n_in > 0 { s_in / n_in as f64 } else { 0.0 };
    let c2 = if n_out > 0 { s_out / n_out as f64 } else { 0.0 };
    let mut data = 0.0;
    for (&v, &m) in gray.iter().zip(inside) {
        let c = if m { c1 } else { c2 };
        data += (v - c) * (v - c);
    }
    let mut perimeter = 0usize;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w && inside[i] != inside[i + 1] {
                perimeter += 1;
            }
            if y + 1 < h && inside[i] != inside[i + w] {
                perimeter += 1;
            }
        }
    }
    mu * perimeter as f64 + data
}

fn region_means(gray: &[f64], phi: &[f64]) -> (f64, f64, usize, usize) {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &p) in gray.iter().zip(phi) {
        if p > 0.0 {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    let c1 = if n_in > 0 { s_in / n_in as f64 } else { 0.0 };
    let c2 = if n_out > 0 { s_out / n_out as f64 } else { 0.0 };
    (c1, c2, n_in, n_out)
}

fn step(gray: &[f64], phi: &[f64], w: usize, h: usize, mu: f64, out: &mut [f64]) {
    let (c1, c2, _, _) = region_means(gray, phi);
    let eps2 = HEAVISIDE_EPS * HEAVISIDE_EPS;
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        phi[y * w + x]
    };
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let p = phi[y * w + x];
            let (l, r, u, d) = (at(xi - 1, yi), at(xi + 1, yi), at(xi, yi - 1), at(xi, yi + 1));
            let phix0 = (r - l) / 2.0;
            let phiy0 = (d - u) / 2.0;
            let k1 = 1.0 / (eps2 + (r - p).powi(2) + phiy0 * phiy0).sqrt();
            let k2 = 1.0 / (eps2 + (p - l).powi(2) + phiy0 * phiy0).sqrt();
            let k3 = 1.0 / (eps2 + phix0 * phix0 + (d - p).powi(2)).sqrt();
            let k4 = 1.0 / (eps2 + phix0 * phix0 + (p - u).powi(2)).sqrt();
            let curvature = r * k1 + l * k2 + d * k3 + u * k4;
            let v = gray[y * w + x];
            let delta = HEAVISIDE_EPS / (std::f64::consts::PI * (eps2 + p * p));
            let num = p + TIME_STEP * delta * (mu * curvature - (v - c1).powi(2) + (v - c2).powi(2));
            let den = 1.0 + mu * TIME_STEP * delta * (k1 + k2 + k3 + k4);
            out[y * w + x] = num / den;
        }
    }
}

fn border_mean(gray: &[f64], w: usize, h: usize) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if x == 0 || y == 0 || x == w - 1 || y == h - 1 {
                s += gray[y * w + x];
                n += 1;
            }
        }
    }
    s / n as f64
}

/// Picks the phase whose mean differs more from the image-border mean.
/// Degenerate partitions (an empty phase, or equal differences) yield an empty mask.
fn foreground(gray: &[f64], w: usize, h: usize, inside: &[bool]) -> Mask {
    let (mut s_in, mut n_in, mut s_out, mut n_out) = (0.0, 0usize, 0.0, 0usize);
    for (&v, &m) in gray.iter().zip(inside) {
        if m {
            s_in += v;
            n_in += 1;
        } else {
            s_out += v;
            n_out += 1;
        }
    }
    if n_in == 0 || n_out == 0 {
        return Mask::zeros(w, h);
    }
    let border = border_mean(gray, w, h);
    let d_in = (s_in / n_in as f64 - border).abs();
    let d_out = (s_out / n_out as f64 - border).abs();
    if (d_in - d_out).abs() <= 1e-12 {
        return Mask::zeros(w, h);
    }
    let keep_inside = d_in > d_out;
    Mask::from_fn(w, h, |x, y| (inside[y * w + x] == keep_inside) as u8 as f32)
}

pub fn checkerboard(w: usize, h: usize) -> Vec<f64> {
    let k = std::f64::consts::PI / 5.0;
    let mut phi = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            phi.push((k * x as f64).sin() * (k * y as f64).sin());
        }
    }
    phi
}

/// Segments a luminance field in `[0, 1]`.
pub fn chan_vese(gray: &Mask, mu: f64, tol: f64, max_iter: usize) -> ChanVeseOutcome {
    assert!(mu >= 0.0 && tol > 0.0 && max_iter >= 1, "invalid Chan-Vese parameters");
    let (w, h) = gray.dims();
    let img: Vec<f64> = gray.values().iter().map(|&v| v as f64).collect();

    let mut phi = checkerboard(w, h);
    let mut next = vec![0.0; w * h];
    let mut best: Vec<bool> = phi.iter().map(|&p| p > 0.0).collect();
    let mut best_energy = energy(&img, w, h, &best, mu);
    let mut accepted = vec![best_energy];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        step(&img, &phi, w, h, mu, &mut next);
        iterations += 1;
        let change = (phi
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / (w * h) as f64)
            .sqrt();
        std::mem::swap(&mut phi, &mut next);

        let region: Vec<bool> = phi.iter().map(|&p| p > 0.0).collect();
        let e = energy(&img, w, h, &region, mu);
        if e <= best_energy {
            best_energy = e;
            best = region;
            accepted.push(e);
        }
        if change < tol {
            converged = true;
            break;
        }
    }

    ChanVeseOutcome {
        mask: foreground(&img, w, h, &best),
        accepted_energies: accepted,
        iterations,
        converged,
    }
}
