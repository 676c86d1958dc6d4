//! Fixture helpers and brute-force reference implementations shared by the
//! integration tests and the acceptance runner.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use agarsynth::cluster::BBox;
use agarsynth::coco::Prediction;
use agarsynth::config::PipelineConfig;
use agarsynth::imaging::{ImageRgb, Mask};
use agarsynth::metrics::GroundTruth;
use agarsynth::stylize::FeatureLayer;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

/// The bundled fixture configuration with every output redirected under `out`.
pub fn fixture_config(out: &Path, workers: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixtures().join("pipeline.toml")).expect("fixture config");
    cfg.workers = workers;
    let p = &mut cfg.paths;
    p.bank = out.join("bank");
    p.dataset = out.join("dataset");
    p.stylized = out.join("stylized");
    p.ground_truth = out.join("dataset").join("annotations.json");
    p.predictions = out.join("predictions.json");
    p.metrics = out.join("metrics");
    p.preview = out.join("preview");
    cfg
}

/// Clusters as the transitive closure of the raw pairwise overlap relation
/// (Warshall), each group sorted, groups ordered by smallest member.
pub fn closure_clusters(boxes: &[BBox], threshold: f64) -> Vec<Vec<usize>> {
    let n = boxes.len();
    let area = |b: &BBox| b.w * b.h;
    let mut reach = vec![vec![false; n]; n];
    for i in 0..n {
        reach[i][i] = true;
        for j in 0..n {
            if i == j {
                continue;
            }
            let (a, b) = (&boxes[i], &boxes[j]);
            let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
            let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
            let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
            let small = area(a).min(area(b));
            if small > 0.0 && inter / small > threshold {
                reach[i][j] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut assigned = vec![false; n];
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let g: Vec<usize> = (0..n).filter(|&j| reach[i][j]).collect();
        for &j in &g {
            assigned[j] = true;
        }
        groups.push(g);
    }
    groups
}

fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a.w * a.h + b.w * b.h - inter)
}

/// Single-class AP by enumerating every score cutoff. Scores must be distinct
/// and each detection may overlap at most one ground truth.
pub fn exhaustive_cutoff_ap(dets: &[Prediction], gts: &[GroundTruth], iou_thresh: f64) -> f64 {
    let mut order: Vec<&Prediction> = dets.iter().collect();
    order.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap());
    let mut claimed = vec![false; gts.len()];
    let mut hits = Vec::new();
    for d in &order {
        let mut hit = false;
        for (g, gt) in gts.iter().enumerate() {
            if !claimed[g] && gt.image_id == d.image_id && box_iou(&d.bbox, &gt.bbox) >= iou_thresh {
                claimed[g] = true;
                hit = true;
                break;
            }
        }
        hits.push(hit);
    }
    // (precision, recall) at each cutoff k = 1..=n
    let mut pr = Vec::new();
    for k in 1..=hits.len() {
        let tp = hits[..k].iter().filter(|&&h| h).count() as f64;
        pr.push((tp / k as f64, tp / gts.len() as f64));
    }
    let mut total = 0.0;
    for i in 0..=100 {
        let r = if i == 100 { 1.0 } else { i as f64 * 0.01 };
        let best = pr
            .iter()
            .filter(|&&(_, rec)| rec >= r)
            .map(|&(p, _)| p)
            .fold(0.0, f64::max);
        total += best;
    }
    total / 101.0
}

/// `G[i][j] = Σ_y Σ_x F[i][y][x]·F[j][y][x] / (C·H·W)`.
pub fn gram_triple_loop(layer: &FeatureLayer) -> Vec<Vec<f64>> {
    let (c, h, w) = (layer.channels, layer.height, layer.width);
    let mut g = vec![vec![0.0; c]; c];
    for i in 0..c {
        for j in 0..c {
            let mut s = 0.0;
            for y in 0..h {
                for x in 0..w {
                    s += layer.get(i, y, x) * layer.get(j, y, x);
                }
            }
            g[i][j] = s / (c * h * w) as f64;
        }
    }
    g
}

fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Direct NL-means: every pixel against every in-window pixel, patch
/// distances summed tap by tap with mirrored borders.
pub fn nl_means_reference(img: &ImageRgb, h: f64, patch: usize, window: usize) -> Vec<[f64; 3]> {
    let (w, hh) = img.dims();
    let r = (patch / 2) as isize;
    let sr = (window / 2) as isize;
    let s = (r as f64 / 2.0).max(0.5);
    let g1: Vec<f64> = (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * s * s)).exp()).collect();
    let norm: f64 = g1.iter().sum();
    let px = |x: isize, y: isize| -> [f64; 3] { img.get(mirror(x, w), mirror(y, hh)).map(f64::from) };
    let mut out = Vec::with_capacity(w * hh);
    for py in 0..hh as isize {
        for pxi in 0..w as isize {
            let mut acc = [0.0; 3];
            let mut wsum = 0.0;
            for qy in (py - sr).max(0)..=(py + sr).min(hh as isize - 1) {
                for qx in (pxi - sr).max(0)..=(pxi + sr).min(w as isize - 1) {
                    let mut d = 0.0;
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let t = g1[(dy + r) as usize] * g1[(dx + r) as usize] / (norm * norm);
                            let a = px(pxi + dx, py + dy);
                            let b = px(qx + dx, qy + dy);
                            let e: f64 = (0..3).map(|c| (a[c] - b[c]).powi(2)).sum::<f64>() / 3.0;
                            d += t * e;
                        }
                    }
                    let wt = (-d / (h * h)).exp();
                    let q = img.get(qx as usize, qy as usize);
                    for c in 0..3 {
                        acc[c] += wt * q[c] as f64;
                    }
                    wsum += wt;
                }
            }
            out.push(acc.map(|v| v / wsum));
        }
    }
    out
}

/// Kolmogorov-Smirnov statistic of `samples` against `1 − exp(−x/mean)`.
pub fn ks_exponential(samples: &[f64], mean: f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-x / mean).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

pub fn mask_iou(a: &Mask, b: &Mask) -> f64 {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&x, &y) in a.values().iter().zip(b.values()) {
        let (x, y) = (x > 0.5, y > 0.5);
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    inter as f64 / union.max(1) as f64
}

/// Tight box of a binary mask in COCO `[x, y, w, h]` pixel units.
pub fn mask_tight_box(m: &Mask) -> Option<BBox> {
    let (w, h) = m.dims();
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if m.get(x, y) > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    (x0 != usize::MAX).then(|| BBox::new(x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64))
}

pub fn content_hash(bytes: &[u8]) -> String {
    // FNV-1a, 128 bit
    let mut h: u128 = 0x6c62272e07bb014262b821756295c58d;
    for &b in bytes {
        h ^= b as u128;
        h = h.wrapping_mul(0x0000000001000000000000000000013B);
    }
    format!("{h:032x}")
}
