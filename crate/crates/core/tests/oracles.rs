//! Brute-force cross-checks and property tests against the public API.

mod common;

use std::collections::HashSet;

use agarsynth::cluster::{build_adjacency, cluster_boxes, connected_components, BBox};
use agarsynth::coco::{AnnotationFile, Prediction, Species};
use agarsynth::compose::{compose_patch, crop_background, ClusterBank, EmptyDish, GenerationConfig, UsableRegion};
use agarsynth::imaging::io::read_rgb;
use agarsynth::imaging::{rgb_to_lab, ImageLab, ImageRgb, Mask, RgbaFragment};
use agarsynth::metrics::{average_precision, counting_metrics, map_coco, CountPair, GroundTruth};
use agarsynth::segment::{
    blending_mask, crop_cluster, detect_dark_artifacts, segment_crop, ColonyCluster, SegmentParams,
};
use agarsynth::seed::rng_for;
use agarsynth::stylize::{
    color_transfer_lab_space, gram, DefaultExtractor, FeatureExtractor, FeatureLayer, LabStats,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::*;

fn arb_box(extent: f64) -> impl Strategy<Value = BBox> {
    (0.0..extent, 0.0..extent, 1.0..extent / 4.0, 1.0..extent / 4.0).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_matches_all_pairs(boxes in prop::collection::vec(arb_box(400.0), 200)) {
        let g = build_adjacency(&boxes, 0.01);
        for i in 0..boxes.len() {
            prop_assert!(!g.has_edge(i, i));
            for j in 0..boxes.len() {
                if i == j {
                    continue;
                }
                let (a, b) = (&boxes[i], &boxes[j]);
                let iw = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
                let ih = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
                let inter = if iw > 0.0 && ih > 0.0 { iw * ih } else { 0.0 };
                let want = inter / (a.w * a.h).min(b.w * b.h) > 0.01;
                prop_assert_eq!(g.has_edge(i, j), want);
                prop_assert_eq!(g.has_edge(i, j), g.has_edge(j, i));
            }
        }
    }

    #[test]
    fn partition_is_exhaustive_disjoint_and_closed(boxes in prop::collection::vec(arb_box(150.0), 0..50)) {
        let g = build_adjacency(&boxes, 0.01);
        let p = connected_components(&g);
        let mut label = vec![usize::MAX; boxes.len()];
        for (k, group) in p.groups.iter().enumerate() {
            for &i in group {
                prop_assert_eq!(label[i], usize::MAX, "node {} in two groups", i);
                label[i] = k;
            }
        }
        prop_assert!(label.iter().all(|&l| l != usize::MAX));
        for i in 0..boxes.len() {
            for j in g.neighbors(i) {
                prop_assert_eq!(label[i], label[j]);
            }
        }
        for group in &p.groups {
            // connected within itself
            let mut seen = HashSet::from([group[0]]);
            let mut stack = vec![group[0]];
            while let Some(i) = stack.pop() {
                for j in g.neighbors(i) {
                    if seen.insert(j) {
                        stack.push(j);
                    }
                }
            }
            prop_assert_eq!(seen.len(), group.len());
        }
        prop_assert_eq!(p.groups, closure_clusters(&boxes, 0.01));
    }

    #[test]
    fn box_mask_is_point_in_any_box(boxes in prop::collection::vec((0.0..60.0f64, 0.0..40.0f64, 1.0..20.0f64, 1.0..20.0f64), 1..5)) {
        let img = ImageRgb::filled(80, 60, [0.5; 3]);
        let boxes: Vec<BBox> = boxes
            .into_iter()
            .map(|(x, y, w, h)| BBox::new(x, y, w.min(80.0 - x), h.min(60.0 - y)))
            .collect();
        let crop = crop_or_fail(&img, &boxes)?;
        let (w, h) = crop.m_bx.dims();
        prop_assert_eq!(crop.image.dims(), (w, h));
        let mut count = 0;
        for y in 0..h {
            for x in 0..w {
                let (cx, cy) = (x as f64 + 0.5, y as f64 + 0.5);
                let inside = crop
                    .member_boxes
                    .iter()
                    .any(|b| cx >= b.x && cx < b.x + b.w && cy >= b.y && cy < b.y + b.h);
                prop_assert_eq!(crop.m_bx.get(x, y) == 1.0, inside, "pixel ({}, {})", x, y);
                count += inside as usize;
            }
        }
        prop_assert_eq!(crop.m_bx.support(), count);
        for b in &crop.member_boxes {
            prop_assert!(b.x >= 0.0 && b.y >= 0.0 && b.right() <= w as f64 && b.bottom() <= h as f64);
        }
    }

    #[test]
    fn gram_matches_triple_loop(data in prop::collection::vec(-3.0..3.0f64, 3 * 4 * 4), v in prop::collection::vec(-1.0..1.0f64, 3)) {
        let layer = FeatureLayer::new(3, 4, 4, data);
        let g = gram(&layer);
        let want = gram_triple_loop(&layer);
        let mut quad = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                prop_assert!((g.get(i, j) - want[i][j]).abs() <= 1e-9);
                prop_assert_eq!(g.get(i, j), g.get(j, i));
                quad += v[i] * g.get(i, j) * v[j];
            }
        }
        prop_assert!(quad >= -1e-12);
    }

    #[test]
    fn map_ignores_order_across_images(seed in any::<u64>()) {
        let mut rng = rng_for(seed, &[]);
        let mut gts = Vec::new();
        let mut dets = Vec::new();
        for image_id in 1..=3u64 {
            for k in 0..4 {
                let b = BBox::new(k as f64 * 50.0, 10.0, 30.0, 30.0);
                gts.push(GroundTruth { image_id, category_id: 2, bbox: b });
                for _ in 0..rng.random_range(0..3) {
                    dets.push(Prediction {
                        image_id,
                        category_id: 2,
                        bbox: b.translated(rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0)),
                        // few score levels so ties are common
                        score: rng.random_range(1..4) as f64 / 4.0,
                    });
                }
            }
        }
        let base = map_coco(&dets, &gts).unwrap();
        // interleave images differently while keeping each image's own order
        let mut tags: Vec<u64> = dets.iter().map(|d| d.image_id).collect();
        tags.shuffle(&mut rng);
        let mut per_image: Vec<std::collections::VecDeque<Prediction>> = vec![Default::default(); 4];
        for d in &dets {
            per_image[d.image_id as usize].push_back(d.clone());
        }
        let shuffled: Vec<Prediction> = tags.iter().map(|&t| per_image[t as usize].pop_front().unwrap()).collect();
        let again = map_coco(&shuffled, &gts).unwrap();
        prop_assert_eq!(base.map, again.map);
    }
}

fn crop_or_fail(img: &ImageRgb, boxes: &[BBox]) -> Result<agarsynth::segment::ClusterCrop, TestCaseError> {
    crop_cluster(img, boxes, 3).map_err(|e| TestCaseError::fail(e.to_string()))
}

#[test]
fn cluster_boundary_threshold_is_exclusive() {
    let a = BBox::new(0.0, 0.0, 100.0, 1.0);
    assert_eq!(cluster_boxes(&[a, BBox::new(99.0, 0.0, 100.0, 1.0)], 0.01).len(), 2);
    assert_eq!(cluster_boxes(&[a, BBox::new(98.5, 0.0, 100.0, 1.0)], 0.01).len(), 1);
}

#[test]
fn five_detection_ap_matches_cutoff_enumeration() {
    let g = |x: f64| GroundTruth {
        image_id: 1,
        category_id: 1,
        bbox: BBox::new(x, 0.0, 20.0, 20.0),
    };
    let gts = [g(0.0), g(100.0), g(200.0)];
    let d = |x: f64, w: f64, score: f64| Prediction {
        image_id: 1,
        category_id: 1,
        bbox: BBox::new(x, 0.0, w, 20.0),
        score,
    };
    let dets = [
        d(0.0, 20.0, 0.95),
        d(400.0, 20.0, 0.9),
        d(100.0, 16.0, 0.8),
        d(0.0, 20.0, 0.7),
        d(200.0, 11.0, 0.6),
    ];
    for t in [0.5, 0.55, 0.75, 0.8, 0.85, 0.95] {
        let got = average_precision(&dets, &gts, t).unwrap().unwrap();
        let want = exhaustive_cutoff_ap(&dets, &gts, t);
        assert!((got - want).abs() <= 1e-9, "t={t}: {got} vs {want}");
    }
    // t = 0.5: hits at ranks 1, 3, 5 → recall 1/3, 2/3, 1 at precision 1, 2/3, 3/5
    let hand = (34.0 * 1.0 + 33.0 * (2.0 / 3.0) + 34.0 * 0.6) / 101.0;
    assert!((average_precision(&dets, &gts, 0.5).unwrap().unwrap() - hand).abs() <= 1e-12);
}

#[test]
fn counting_batch_hand_values() {
    let pairs = [(10, 8), (0, 0), (5, 5)].map(|(t, p)| CountPair {
        image_id: t,
        truth: t,
        predicted: p,
    });
    let (mae, smape) = counting_metrics(&pairs).unwrap();
    assert!((mae - 2.0 / 3.0).abs() < 1e-12);
    // |10 − 8| / ((10 + 8) / 2) = 2/9, averaged over three images
    assert!((smape - 100.0 * (2.0 / 9.0) / 3.0).abs() < 1e-12);
    assert!((smape - 7.41).abs() < 0.005);
}

#[test]
fn extractor_matches_hand_convolution() {
    let img = ImageRgb::from_fn(5, 5, |x, y| {
        [
            (x + 2 * y) as f32 / 13.0,
            ((x * 3 + y) % 5) as f32 / 4.0,
            ((x * y) % 7) as f32 / 6.0,
        ]
    });
    let ex = DefaultExtractor::default();
    let maps = ex.extract(&img);
    assert_eq!(maps.layers.len(), 1, "5x5 is too small to pool");
    let layer = &maps.layers[0];
    assert_eq!((layer.channels, layer.height, layer.width), (ex.filters().len(), 3, 3));
    for (k, f) in ex.filters().iter().enumerate() {
        for y in 0..3 {
            for x in 0..3 {
                let mut s = 0.0;
                for c in 0..3 {
                    for dy in 0..3 {
                        for dx in 0..3 {
                            s += f[c][dy][dx] * img.get(x + dx, y + dy)[c] as f64;
                        }
                    }
                }
                assert!((layer.get(k, y, x) - s.max(0.0)).abs() <= 1e-9, "filter {k} at ({x}, {y})");
            }
        }
    }
}

fn lab_moments(img: &ImageLab) -> ([f64; 3], [f64; 3]) {
    let n = img.pixels().len() as f64;
    let mut mean = [0.0; 3];
    let mut sq = [0.0; 3];
    for p in img.pixels() {
        for c in 0..3 {
            mean[c] += p[c] / n;
        }
    }
    for p in img.pixels() {
        for c in 0..3 {
            sq[c] += (p[c] - mean[c]).powi(2) / n;
        }
    }
    (mean, sq.map(f64::sqrt))
}

#[test]
fn color_transfer_hits_interpolated_moments() {
    let gray = ImageRgb::from_fn(32, 32, |x, y| {
        let v = 0.45 + ((x * 13 + y * 7) % 11) as f32 / 110.0;
        [v, v, v]
    });
    let warm = ImageRgb::from_fn(16, 16, |x, y| {
        let v = ((x * 5 + y * 3) % 9) as f32 / 90.0;
        [0.85 + v, 0.55 + v, 0.30 - v]
    });
    let (content, style) = (rgb_to_lab(&gray), rgb_to_lab(&warm));
    let (mc, sc) = lab_moments(&content);
    let (ms, ss) = lab_moments(&style);
    let stats = LabStats::of(&style);
    for s in [0.0, 0.4, 0.8, 1.0] {
        let out = color_transfer_lab_space(&content, &stats, s);
        let (mo, so) = lab_moments(&out);
        for c in 0..3 {
            let want_mean = (1.0 - s) * mc[c] + s * ms[c];
            assert!((mo[c] - want_mean).abs() < 1e-9, "mean c{c} s{s}: {} vs {want_mean}", mo[c]);
            if sc[c] > 1e-6 {
                let want_std = (1.0 - s) * sc[c] + s * ss[c];
                assert!((so[c] - want_std).abs() < 1e-9, "std c{c} s{s}: {} vs {want_std}", so[c]);
            }
        }
    }
}

#[test]
fn blending_mask_two_color_fixture() {
    let (c0, c1) = ([0.76f32, 0.62, 0.36], [0.95f32, 0.90, 0.70]);
    let img = ImageRgb::from_fn(20, 20, |x, y| if (6..14).contains(&x) && (5..15).contains(&y) { c1 } else { c0 });
    let lab = rgb_to_lab(&img);
    let m_s = Mask::from_fn(20, 20, |x, y| ((6..14).contains(&x) && (5..15).contains(&y)) as u8 as f32);
    let l0 = lab.get(0, 0);
    let l1 = lab.get(8, 8);
    let de = ((l0[0] - l1[0]).powi(2) + (l0[1] - l1[1]).powi(2) + (l0[2] - l1[2]).powi(2)).sqrt();
    for k in [5.0, 12.0, 60.0] {
        let m = blending_mask(&lab, &m_s, k).unwrap();
        for y in 0..20 {
            for x in 0..20 {
                let want = if m_s.get(x, y) > 0.0 { (de / k).clamp(0.0, 1.0) } else { 0.0 };
                assert!((m.get(x, y) as f64 - want).abs() < 1e-6, "k={k} ({x}, {y})");
            }
        }
    }
}

#[test]
fn dark_mask_area_grows_with_luminance_threshold() {
    let img = read_rgb(&fixtures().join("images").join("dish_02.png")).unwrap();
    let lab = rgb_to_lab(&img.crop(380, 190, 60, 60));
    let mut last = 0;
    for l in [5.0, 10.0, 20.0, 25.0, 40.0, 60.0, 80.0, 101.0] {
        let n = detect_dark_artifacts(&lab, l, 10.0).support();
        assert!(n >= last, "area shrank at L < {l}");
        last = n;
    }
    assert!(detect_dark_artifacts(&lab, 25.0, 10.0).support() > 0, "speck not detected");
}

/// Segments every annotated cluster of the fixtures and checks the mask and
/// instance invariants.
#[test]
fn fixture_clusters_satisfy_mask_invariants() {
    let file = AnnotationFile::load(&fixtures().join("annotations.json")).unwrap();
    let by_image = file.annotations_by_image();
    let params = SegmentParams::default();
    let mut pairs = 0;
    for entry in &file.images {
        let img = read_rgb(&fixtures().join("images").join(&entry.file_name)).unwrap();
        let anns = &by_image[&entry.id];
        let boxes: Vec<BBox> = anns.iter().map(|a| a.bbox).collect();
        for (k, group) in cluster_boxes(&boxes, 0.01).groups.iter().enumerate() {
            let members: Vec<BBox> = group.iter().map(|&i| boxes[i]).collect();
            let crop = crop_cluster(&img, &members, params.crop_margin).unwrap();
            let (cleaned, m) = segment_crop(&crop, &params, &mut rng_for(7, &[entry.id, k as u64])).unwrap();
            let dims = crop.image.dims();
            for mask in [&m.m_bx, &m.m_d, &m.m_s, &m.m_b, &m.alpha] {
                assert_eq!(mask.dims(), dims);
            }
            assert_eq!(cleaned.dims(), dims);
            assert!(m.m_d.is_binary() && m.m_s.is_binary());
            for i in 0..dims.0 * dims.1 {
                let b = m.m_b.values()[i];
                assert!((0.0..=1.0).contains(&b));
                let a = m.alpha.values()[i];
                assert!(a <= m.m_bx.values()[i].min(m.m_s.values()[i]));
            }
            // no dark speck survives inside the cut-out
            let lab = rgb_to_lab(&cleaned);
            for (p, &a) in lab.pixels().iter().zip(m.alpha.values()) {
                if a > 0.5 {
                    assert!(!(p[0] < params.dark_l_thresh && p[2] < params.dark_b_thresh));
                }
            }

            let Ok(agarsynth::segment::Extraction::Kept(c)) =
                agarsynth::segment::extract_from_masks(&crop, cleaned, &m, Species::EColi)
            else {
                panic!("fixture cluster {k} of image {} was discarded", entry.id);
            };
            assert_eq!(c.len(), members.len());
            pairs += (c.len() == 2) as usize;
            for (mask, b) in c.instance_masks.iter().zip(&c.member_boxes) {
                assert_eq!(mask_tight_box(mask).as_ref(), Some(b));
                for (&mv, &av) in mask.values().iter().zip(c.fragment.alpha().values()) {
                    assert!(mv == 0.0 || av > 0.0, "instance pixel outside alpha support");
                }
            }
        }
    }
    assert_eq!(pairs, 2, "one overlapping pair per fixture image");
}

fn own_bilinear(img: &ImageRgb, sx: f64, sy: f64) -> [f64; 3] {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as usize, y0 as usize);
    let x1 = (x0 + 1).min(img.width() - 1);
    let y1 = (y0 + 1).min(img.height() - 1);
    let p = |x: usize, y: usize| img.get(x, y).map(f64::from);
    std::array::from_fn(|c| {
        p(x0, y0)[c] * (1.0 - fx) * (1.0 - fy)
            + p(x1, y0)[c] * fx * (1.0 - fy)
            + p(x0, y1)[c] * (1.0 - fx) * fy
            + p(x1, y1)[c] * fx * fy
    })
}

fn inside(region: &UsableRegion, x: f64, y: f64) -> bool {
    let eps = 1e-9;
    match *region {
        UsableRegion::Rect { x: rx, y: ry, w, h } => {
            x >= rx - eps && y >= ry - eps && x <= rx + w - 1.0 + eps && y <= ry + h - 1.0 + eps
        }
        UsableRegion::Circle { cx, cy, r } => ((x - cx).powi(2) + (y - cy).powi(2)).sqrt() <= r + eps,
    }
}

#[test]
fn background_crops_stay_in_the_usable_region() {
    let textured = |w: usize, h: usize| {
        ImageRgb::from_fn(w, h, |x, y| {
            [
                ((x * 7 + y * 3) % 29) as f32 / 28.0,
                ((x * 11 + y * 5) % 31) as f32 / 30.0,
                ((x + y * 13) % 17) as f32 / 16.0,
            ]
        })
    };
    let dishes = [
        EmptyDish::new(
            0,
            read_rgb(&fixtures().join("images").join("empty_00.png")).unwrap(),
            UsableRegion::Rect {
                x: 100.0,
                y: 100.0,
                w: 824.0,
                h: 824.0,
            },
        )
        .unwrap(),
        EmptyDish::new(
            1,
            textured(700, 660),
            UsableRegion::Circle {
                cx: 349.5,
                cy: 329.5,
                r: 320.0,
            },
        )
        .unwrap(),
    ];
    let mut rng = rng_for(0xB6, &[]);
    for (d, patch) in [(0usize, 512usize), (1, 256)] {
        let dish = &dishes[d];
        for _ in 0..500 {
            let crop = crop_background(dish, &mut rng, patch).unwrap();
            assert_eq!(crop.image.dims(), (patch, patch));
            let [tl, tr, bl, br] = crop.corners;
            let (c, s) = (crop.angle_deg.to_radians().cos(), crop.angle_deg.to_radians().sin());
            let side = (patch - 1) as f64;
            // the crop is the image of an axis-aligned square under the rotation
            let close = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).abs() < 1e-6 && (a.1 - b.1).abs() < 1e-6;
            assert!(close(tr, (tl.0 + side * c, tl.1 + side * s)), "{:?}", crop.corners);
            assert!(close(bl, (tl.0 - side * s, tl.1 + side * c)));
            assert!(close(br, (tr.0 - side * s, tr.1 + side * c)));
            for (k, &(sx, sy)) in crop.corners.iter().enumerate() {
                assert!(inside(&dish.region, sx, sy), "corner {k} ({sx}, {sy}) outside");
                let (px, py) = [(0, 0), (patch - 1, 0), (0, patch - 1), (patch - 1, patch - 1)][k];
                let want = own_bilinear(&dish.image, sx, sy);
                let got = crop.image.get(px, py);
                for ch in 0..3 {
                    assert!((got[ch] as f64 - want[ch]).abs() < 1e-5);
                }
            }
        }
    }
}

fn tiny_bank() -> ClusterBank {
    ClusterBank::new(Species::ALL.iter().map(|&s| {
        let color = ImageRgb::filled(4, 4, [0.9, 0.9, 0.8]);
        let alpha = Mask::ones(4, 4);
        ColonyCluster::from_instances(RgbaFragment::new(color, alpha).unwrap(), vec![Mask::ones(4, 4)], s).unwrap()
    }))
}

#[test]
fn species_histogram_is_uniform_within_five_sigma() {
    let cfg = GenerationConfig {
        patch_size: 32,
        count_mean: 1.0,
        ..GenerationConfig::default()
    };
    let dish = EmptyDish::new(
        0,
        ImageRgb::filled(100, 100, [0.7, 0.6, 0.4]),
        UsableRegion::Rect {
            x: 0.0,
            y: 0.0,
            w: 100.0,
            h: 100.0,
        },
    )
    .unwrap();
    let bank = tiny_bank();
    let mut rng = rng_for(0x5EC, &[]);
    let n = 10_000;
    let mut hist = [0usize; 5];
    for i in 0..n {
        let p = compose_patch(&cfg, &bank, std::slice::from_ref(&dish), &mut rng, i as u64).unwrap();
        hist[p.provenance.species.index()] += 1;
    }
    let sigma = (n as f64 * 0.2 * 0.8).sqrt();
    for (k, &h) in hist.iter().enumerate() {
        assert!((h as f64 - n as f64 / 5.0).abs() <= 5.0 * sigma, "class {k}: {h} of {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn composed_patches_are_consistent(seed in any::<u64>(), mean in 1.0..30.0f64) {
        let cfg = GenerationConfig {
            patch_size: 96,
            count_mean: mean,
            ..GenerationConfig::default()
        };
        let dish = EmptyDish::new(
            0,
            ImageRgb::filled(200, 200, [0.7, 0.6, 0.4]),
            UsableRegion::Circle { cx: 99.5, cy: 99.5, r: 95.0 },
        )
        .unwrap();
        let mut rng = rng_for(seed, &[]);
        let p = compose_patch(&cfg, &tiny_bank(), std::slice::from_ref(&dish), &mut rng, seed).unwrap();
        prop_assert_eq!(p.annotations.len(), p.placements.len());
        for (i, a) in p.placements.iter().enumerate() {
            prop_assert!(a.x + a.w <= 96 && a.y + a.h <= 96);
            for b in &p.placements[i + 1..] {
                prop_assert!(a.x + a.w <= b.x || b.x + b.w <= a.x || a.y + a.h <= b.y || b.y + b.h <= a.y);
            }
        }
        for a in &p.annotations {
            prop_assert_eq!(a.species, p.provenance.species);
            prop_assert!(a.bbox.within(96.0, 96.0));
            prop_assert_eq!(mask_tight_box(&a.mask.to_mask()), Some(a.bbox));
        }
    }
}
