//! Cutting colony clusters out of real dish images.
//!
//! A cluster crop goes through: unsharp mask → Lab → dark-artifact mask `m_d`
//! (dilated) → random-walk inpainting → non-local means → Chan–Vese on L →
//! margin dilation (`m_s`) → blending mask `m_b`. The alpha channel is
//! `m_bx ∘ m_s ∘ m_b` where `m_bx` is the union of the member boxes.

mod chan_vese;

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use chan_vese::{chan_vese, checkerboard, energy as chan_vese_energy, ChanVeseOutcome};

use crate::cluster::BBox;
use crate::coco::Species;
use crate::error::{Error, Result};
use crate::imaging::{
    dilate, hadamard, lab_distance, nl_means_denoise, rgb_to_lab, rotate_flip_mask, rotate_flip_rgba,
    unsharp_mask, ImageLab, ImageRgb, Mask, NlMeansParams, RgbaFragment,
};

/// Tolerance on the RMS level-set update that stops Chan–Vese.
pub const CHAN_VESE_TOL: f64 = 1e-3;

/// Segmentation parameters. All fields except `crop_margin`, `nlm_window` and
/// `walk_max_steps` are tunable per dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegmentParams {
    /// Context pixels added around the union of member boxes.
    pub crop_margin: usize,
    pub unsharp_radius: f64,
    pub unsharp_amount: f64,
    /// Dark artifacts: L below this (0..100)...
    pub dark_l_thresh: f64,
    /// ...and b below this.
    pub dark_b_thresh: f64,
    pub dark_dilation: u32,
    pub nlm_h: f64,
    pub nlm_patch: usize,
    pub nlm_window: usize,
    pub cv_mu: f64,
    pub cv_max_iter: usize,
    /// Dilation applied to the Chan–Vese mask so colony edges are kept.
    pub seg_margin: u32,
    /// Lab distance at which the blending mask saturates to 1.
    pub blend_scale: f64,
    pub walk_max_steps: usize,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            crop_margin: 10,
            unsharp_radius: 1.0,
            unsharp_amount: 1.0,
            dark_l_thresh: 25.0,
            dark_b_thresh: 10.0,
            dark_dilation: 2,
            nlm_h: 0.06,
            nlm_patch: 5,
            nlm_window: 11,
            cv_mu: 0.25,
            cv_max_iter: 300,
            seg_margin: 2,
            blend_scale: 12.0,
            walk_max_steps: 1000,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.unsharp_radius > 0.0) || !(self.unsharp_amount >= 0.0) {
            return bad("unsharp_radius must be > 0 and unsharp_amount >= 0");
        }
        if !self.dark_l_thresh.is_finite() || !self.dark_b_thresh.is_finite() {
            return bad("dark thresholds must be finite");
        }
        if !(self.nlm_h > 0.0) || self.nlm_patch.is_multiple_of(2) || self.nlm_window.is_multiple_of(2) {
            return bad("nlm_h must be > 0 and nlm_patch/nlm_window odd");
        }
        if !(self.cv_mu >= 0.0) || self.cv_max_iter == 0 {
            return bad("cv_mu must be >= 0 and cv_max_iter >= 1");
        }
        if !(self.blend_scale > 0.0) || self.walk_max_steps == 0 {
            return bad("blend_scale must be > 0 and walk_max_steps >= 1");
        }
        Ok(())
    }
}

/// A rectangular crop around one cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterCrop {
    pub image: ImageRgb,
    /// Top-left corner of the crop in the source image.
    pub origin: (usize, usize),
    /// Member boxes in crop coordinates.
    pub member_boxes: Vec<BBox>,
    /// 1 on pixels whose center lies in any member box.
    pub m_bx: Mask,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSet {
    pub m_bx: Mask,
    pub m_d: Mask,
    pub m_s: Mask,
    pub m_b: Mask,
    pub alpha: Mask,
}

/// A background-free colony cluster ready for placement.
#[derive(Clone, Debug, PartialEq)]
pub struct ColonyCluster {
    pub fragment: RgbaFragment,
    /// Tight box of each instance mask, in fragment coordinates.
    pub member_boxes: Vec<BBox>,
    /// Binary, fragment-sized, one per member.
    pub instance_masks: Vec<Mask>,
    pub species: Species,
}

/// Pixel range `[lo, hi)` whose centers fall in `[start, end)`.
fn center_span(start: f64, end: f64, limit: usize) -> (usize, usize) {
    let lo = (start - 0.5).ceil().max(0.0) as usize;
    let hi = ((end - 0.5).ceil().max(0.0) as usize).min(limit);
    (lo.min(limit), hi)
}

fn box_mask(w: usize, h: usize, b: &BBox) -> Mask {
    let mut m = Mask::zeros(w, h);
    let (x0, x1) = center_span(b.x, b.right(), w);
    let (y0, y1) = center_span(b.y, b.bottom(), h);
    for y in y0..y1 {
        for x in x0..x1 {
            m.set(x, y, 1.0);
        }
    }
    m
}

pub fn crop_cluster(image: &ImageRgb, cluster_boxes: &[BBox], margin: usize) -> Result<ClusterCrop> {
    if cluster_boxes.is_empty() {
        return Err(Error::InvalidArgument("empty cluster".into()));
    }
    let (iw, ih) = image.dims();
    let x0 = cluster_boxes.iter().map(|b| b.x).fold(f64::INFINITY, f64::min).floor();
    let y0 = cluster_boxes.iter().map(|b| b.y).fold(f64::INFINITY, f64::min).floor();
    let x1 = cluster_boxes.iter().map(|b| b.right()).fold(f64::NEG_INFINITY, f64::max).ceil();
    let y1 = cluster_boxes.iter().map(|b| b.bottom()).fold(f64::NEG_INFINITY, f64::max).ceil();
    let m = margin as f64;
    let cx0 = (x0 - m).max(0.0) as usize;
    let cy0 = (y0 - m).max(0.0) as usize;
    let cx1 = ((x1 + m).min(iw as f64).max(0.0) as usize).min(iw);
    let cy1 = ((y1 + m).min(ih as f64).max(0.0) as usize).min(ih);
    if cx1 <= cx0 || cy1 <= cy0 {
        return Err(Error::InvalidArgument("cluster lies outside the image".into()));
    }
    let (w, h) = (cx1 - cx0, cy1 - cy0);
    let member_boxes: Vec<BBox> = cluster_boxes
        .iter()
        .map(|b| b.translated(-(cx0 as f64), -(cy0 as f64)))
        .collect();
    let mut m_bx = Mask::zeros(w, h);
    for b in &member_boxes {
        let (bx0, bx1) = center_span(b.x, b.right(), w);
        let (by0, by1) = center_span(b.y, b.bottom(), h);
        for y in by0..by1 {
            for x in bx0..bx1 {
                m_bx.set(x, y, 1.0);
            }
        }
    }
    Ok(ClusterCrop {
        image: image.crop(cx0, cy0, w, h),
        origin: (cx0, cy0),
        member_boxes,
        m_bx,
    })
}

/// `1` where `L < l_thresh` and `b < b_thresh`.
pub fn detect_dark_artifacts(lab: &ImageLab, l_thresh: f64, b_thresh: f64) -> Mask {
    Mask::from_fn(lab.width(), lab.height(), |x, y| {
        let [l, _, b] = lab.get(x, y);
        (l < l_thresh && b < b_thresh) as u8 as f32
    })
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// For every pixel, the nearest (8-connected BFS distance) pixel outside `m_d`.
fn nearest_valid(m_d: &Mask) -> Vec<usize> {
    let (w, h) = m_d.dims();
    let mut src = vec![usize::MAX; w * h];
    let mut queue = VecDeque::new();
    for (i, &v) in m_d.values().iter().enumerate() {
        if v == 0.0 {
            src[i] = i;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for (dx, dy) in NEIGHBORS8 {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                continue;
            }
            let j = ny as usize * w + nx as usize;
            if src[j] == usize::MAX {
                src[j] = src[i];
                queue.push_back(j);
            }
        }
    }
    src
}

/// Replaces every `m_d` pixel by the color of the first valid pixel a uniform
/// 8-neighbor random walk reaches from it. Walks longer than `max_steps` fall
/// back to the nearest valid pixel.
pub fn randomwalk_inpaint<R: Rng + ?Sized>(
    crop: &ImageRgb,
    m_d: &Mask,
    rng: &mut R,
    max_steps: usize,
) -> Result<ImageRgb> {
    if crop.dims() != m_d.dims() {
        return Err(Error::DimensionMismatch {
            expected: crop.dims(),
            got: m_d.dims(),
        });
    }
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    let (w, h) = crop.dims();
    let masked = |x: usize, y: usize| m_d.get(x, y) > 0.0;
    if m_d.values().iter().all(|&v| v > 0.0) {
        return Err(Error::InvalidArgument(
            "artifact mask covers the whole crop; no valid pixels to copy from".into(),
        ));
    }
    let mut out = crop.clone();
    let mut fallback: Option<Vec<usize>> = None;
    let mut moves = [(0isize, 0isize); 8];
    for y in 0..h {
        for x in 0..w {
            if !masked(x, y) {
                continue;
            }
            let (mut cx, mut cy) = (x, y);
            let mut found = None;
            for _ in 0..max_steps {
                let mut n = 0;
                for (dx, dy) in NEIGHBORS8 {
                    let (nx, ny) = (cx as isize + dx, cy as isize + dy);
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        moves[n] = (nx, ny);
                        n += 1;
                    }
                }
                if n == 0 {
                    break;
                }
                let (nx, ny) = moves[rng.random_range(0..n)];
                cx = nx as usize;
                cy = ny as usize;
                if !masked(cx, cy) {
                    found = Some((cx, cy));
                    break;
                }
            }
            let (sx, sy) = match found {
                Some(p) => p,
                None => {
                    let near = fallback.get_or_insert_with(|| nearest_valid(m_d));
                    let i = near[y * w + x];
                    (i % w, i / w)
                }
            };
            out.set(x, y, crop.get(sx, sy));
        }
    }
    Ok(out)
}

/// `clamp(ΔE(p, background mean) / scale_k, 0, 1)`, the background being
/// the pixels where `m_s` is 0.
pub fn blending_mask(lab: &ImageLab, m_s: &Mask, scale_k: f64) -> Result<Mask> {
    if lab.dims() != m_s.dims() {
        return Err(Error::DimensionMismatch {
            expected: lab.dims(),
            got: m_s.dims(),
        });
    }
    if !(scale_k > 0.0) {
        return Err(Error::InvalidArgument("blend scale must be positive".into()));
    }
    let mut sum = [0.0f64; 3];
    let mut n = 0usize;
    for (p, &m) in lab.pixels().iter().zip(m_s.values()) {
        if m == 0.0 {
            for c in 0..3 {
                sum[c] += p[c];
            }
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "segmentation mask covers the whole crop; no background to blend against".into(),
        ));
    }
    let bg = sum.map(|s| s / n as f64);
    Ok(Mask::from_fn(lab.width(), lab.height(), |x, y| {
        (lab_distance(lab.get(x, y), bg) / scale_k).clamp(0.0, 1.0) as f32
    }))
}

/// Runs the cleaning and segmentation stages on a crop.
///
/// Returns the cleaned color image (inpainted and denoised) and the masks.
pub fn segment_crop<R: Rng + ?Sized>(
    crop: &ClusterCrop,
    params: &SegmentParams,
    rng: &mut R,
) -> Result<(ImageRgb, MaskSet)> {
    let sharpened = unsharp_mask(&crop.image, params.unsharp_radius, params.unsharp_amount);
    let lab = rgb_to_lab(&sharpened);
    let m_d = dilate(
        &detect_dark_artifacts(&lab, params.dark_l_thresh, params.dark_b_thresh),
        params.dark_dilation,
    );
    let inpainted = if m_d.support() == 0 {
        sharpened
    } else {
        randomwalk_inpaint(&sharpened, &m_d, rng, params.walk_max_steps)?
    };
    let cleaned = nl_means_denoise(
        &inpainted,
        &NlMeansParams::new(params.nlm_h, params.nlm_patch, params.nlm_window),
    );
    let lab = rgb_to_lab(&cleaned);
    let luminance = Mask::from_fn(lab.width(), lab.height(), |x, y| {
        (lab.get(x, y)[0] / 100.0).clamp(0.0, 1.0) as f32
    });
    let cv = chan_vese(&luminance, params.cv_mu, CHAN_VESE_TOL, params.cv_max_iter);
    let m_s = dilate(&cv.mask, params.seg_margin);
    let m_b = blending_mask(&lab, &m_s, params.blend_scale)?;
    let alpha = hadamard(&hadamard(&crop.m_bx, &m_s)?, &m_b)?;
    Ok((
        cleaned,
        MaskSet {
            m_bx: crop.m_bx.clone(),
            m_d,
            m_s,
            m_b,
            alpha,
        },
    ))
}

fn bounds_to_box((x, y, w, h): (usize, usize, usize, usize)) -> BBox {
    BBox::new(x as f64, y as f64, w as f64, h as f64)
}

impl ColonyCluster {
    /// Assembles a cluster from a fragment and binary instance masks; boxes are
    /// recomputed as tight boxes and empty instances are dropped.
    pub fn from_instances(fragment: RgbaFragment, masks: Vec<Mask>, species: Species) -> Result<Self> {
        let mut member_boxes = Vec::new();
        let mut instance_masks = Vec::new();
        for m in masks {
            if m.dims() != fragment.dims() {
                return Err(Error::DimensionMismatch {
                    expected: fragment.dims(),
                    got: m.dims(),
                });
            }
            if let Some(b) = m.tight_bounds() {
                member_boxes.push(bounds_to_box(b));
                instance_masks.push(m);
            }
        }
        Ok(ColonyCluster {
            fragment,
            member_boxes,
            instance_masks,
            species,
        })
    }

    pub fn len(&self) -> usize {
        self.instance_masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instance_masks.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.fragment.dims()
    }

    /// Rotated and flipped copy; instance masks are re-binarized at 0.5.
    pub fn transformed(&self, angle_deg: f64, flip_h: bool, flip_v: bool) -> ColonyCluster {
        let fragment = rotate_flip_rgba(&self.fragment, angle_deg, flip_h, flip_v);
        let masks = self
            .instance_masks
            .iter()
            .map(|m| rotate_flip_mask(m, angle_deg, flip_h, flip_v).map(|v| (v >= 0.5) as u8 as f32))
            .collect();
        ColonyCluster::from_instances(fragment, masks, self.species).expect("shared geometry")
    }

    /// Bilinearly rescaled copy (size augmentation).
    pub fn scaled(&self, factor: f64) -> ColonyCluster {
        assert!(factor > 0.0, "scale factor must be positive");
        let (w, h) = self.dims();
        let nw = ((w as f64 * factor).round() as usize).max(1);
        let nh = ((h as f64 * factor).round() as usize).max(1);
        let src = |x: usize, y: usize| {
            (
                ((x as f64 + 0.5) * w as f64 / nw as f64 - 0.5).clamp(0.0, (w - 1) as f64),
                ((y as f64 + 0.5) * h as f64 / nh as f64 - 0.5).clamp(0.0, (h - 1) as f64),
            )
        };
        let color = ImageRgb::from_fn(nw, nh, |x, y| {
            let (sx, sy) = src(x, y);
            crate::imaging::sample_rgb(self.fragment.color(), sx, sy).expect("clamped to the center hull")
        });
        let resample = |m: &Mask| {
            Mask::from_fn(nw, nh, |x, y| {
                let (sx, sy) = src(x, y);
                crate::imaging::sample_mask(m, sx, sy).clamp(0.0, 1.0) as f32
            })
        };
        let alpha = resample(self.fragment.alpha());
        let masks = self
            .instance_masks
            .iter()
            .map(|m| resample(m).map(|v| (v >= 0.5) as u8 as f32))
            .collect();
        let fragment = RgbaFragment::new(color, alpha).expect("same size");
        ColonyCluster::from_instances(fragment, masks, self.species).expect("same size")
    }
}

/// Outcome of extracting one cluster.
#[derive(Clone, Debug)]
pub enum Extraction {
    Kept(ColonyCluster),
    /// The final alpha support was empty.
    Discarded,
}

/// Crops, cleans and segments one cluster, then cuts per-colony instance masks
/// (`alpha > 0.5` within each member box). The fragment is trimmed to the
/// alpha support.
pub fn extract_cluster<R: Rng + ?Sized>(
    image: &ImageRgb,
    cluster_boxes: &[BBox],
    species: Species,
    params: &SegmentParams,
    rng: &mut R,
) -> Result<Extraction> {
    let crop = crop_cluster(image, cluster_boxes, params.crop_margin)?;
    let (cleaned, masks) = segment_crop(&crop, params, rng)?;
    extract_from_masks(&crop, cleaned, &masks, species)
}

/// Instance cutting and trimming for already-computed masks.
pub fn extract_from_masks(
    crop: &ClusterCrop,
    cleaned: ImageRgb,
    masks: &MaskSet,
    species: Species,
) -> Result<Extraction> {
    let alpha = &masks.alpha;
    let Some((tx, ty, tw, th)) = alpha.tight_bounds() else {
        return Ok(Extraction::Discarded);
    };
    let (w, h) = alpha.dims();
    let instances: Vec<Mask> = crop
        .member_boxes
        .iter()
        .map(|b| {
            let own = box_mask(w, h, b);
            Mask::from_fn(w, h, |x, y| (own.get(x, y) > 0.0 && alpha.get(x, y) > 0.5) as u8 as f32)
                .crop(tx, ty, tw, th)
        })
        .collect();
    let fragment = RgbaFragment::new(cleaned.crop(tx, ty, tw, th), alpha.crop(tx, ty, tw, th))?;
    let cluster = ColonyCluster::from_instances(fragment, instances, species)?;
    if cluster.is_empty() {
        return Ok(Extraction::Discarded);
    }
    Ok(Extraction::Kept(cluster))
}
