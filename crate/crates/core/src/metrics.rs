//! Detection and counting metrics: IoU, COCO-style AP and mAP, MAE, sMAPE.
//!
//! AP follows the COCO evaluator: detections are taken in descending score
//! order (stable, so equal scores keep their input order), each one greedily
//! claims the unmatched ground truth of its image and class with the highest
//! IoU at or above the threshold, and precision is read off the
//! monotone envelope at 101 recall points. Unlike the reference toolkit there
//! is no per-image detection cap and no area ranges.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::BBox;
use crate::coco::{Annotation, AnnotationFile, Prediction};
use crate::error::{Error, Result};

/// A scored, class-labeled box.
pub type DetectionRecord = Prediction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
}

impl From<&Annotation> for GroundTruth {
    fn from(a: &Annotation) -> Self {
        GroundTruth {
            image_id: a.image_id,
            category_id: a.category_id,
            bbox: a.bbox,
        }
    }
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// The ten thresholds 0.50, 0.55, …, 0.95.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

/// Recall sample points as `numpy.linspace(0, 1, 101)` produces them.
pub fn recall_points() -> [f64; 101] {
    std::array::from_fn(|i| if i == 100 { 1.0 } else { i as f64 * 0.01 })
}

/// True-positive flags of `dets` (already in evaluation order) against `gts`.
fn greedy_match(dets: &[&DetectionRecord], gts: &[&GroundTruth], iou_thresh: f64) -> Vec<bool> {
    let thresh = iou_thresh.min(1.0 - 1e-10);
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best = thresh;
            let mut hit = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.image_id != d.image_id {
                    continue;
                }
                let v = iou(&d.bbox, &gt.bbox);
                // Ties go to the later ground truth, as in the reference evaluator.
                if v >= best {
                    best = v;
                    hit = Some(g);
                }
            }
            if let Some(g) = hit {
                taken[g] = true;
            }
            hit.is_some()
        })
        .collect()
}

/// Puts detections in evaluation order: by image id, then input order, then
/// stably by descending score.
fn evaluation_order<'a>(dets: &[&'a DetectionRecord]) -> Vec<&'a DetectionRecord> {
    let mut order: Vec<&DetectionRecord> = dets.to_vec();
    order.sort_by_key(|d| d.image_id);
    order.sort_by(|a, b| b.score.total_cmp(&a.score));
    order
}

/// 101-point interpolated precision from cumulative TP flags.
fn interpolated_ap(tp: &[bool], n_gt: usize) -> f64 {
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let (mut t, mut f) = (0usize, 0usize);
    for &hit in tp {
        if hit {
            t += 1;
        } else {
            f += 1;
        }
        recall.push(t as f64 / n_gt as f64);
        precision.push(t as f64 / (t + f) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let total: f64 = recall_points()
        .iter()
        .map(|&r| {
            let k = recall.partition_point(|&x| x < r);
            precision.get(k).copied().unwrap_or(0.0)
        })
        .sum();
    total / 101.0
}

/// AP of one class at one IoU threshold; `None` when there is no ground truth.
pub fn average_precision(dets: &[DetectionRecord], gts: &[GroundTruth], iou_thresh: f64) -> Result<Option<f64>> {
    let classes: BTreeSet<u32> = dets
        .iter()
        .map(|d| d.category_id)
        .chain(gts.iter().map(|g| g.category_id))
        .collect();
    if classes.len() > 1 {
        return Err(Error::InvalidArgument(format!(
            "average_precision expects a single class, got {classes:?}"
        )));
    }
    let dets: Vec<&DetectionRecord> = dets.iter().collect();
    let gts: Vec<&GroundTruth> = gts.iter().collect();
    Ok(class_ap(&dets, &gts, iou_thresh))
}

fn class_ap(dets: &[&DetectionRecord], gts: &[&GroundTruth], iou_thresh: f64) -> Option<f64> {
    if gts.is_empty() {
        return None;
    }
    let order = evaluation_order(dets);
    let tp = greedy_match(&order, gts, iou_thresh);
    Some(interpolated_ap(&tp, gts.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApRow {
    pub iou: f64,
    /// Mean over classes with ground truth.
    pub ap: f64,
    /// `(category_id, AP)`.
    pub per_class: Vec<(u32, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    pub map: f64,
    pub table: Vec<ApRow>,
    /// Classes that only appear among detections; their AP is undefined.
    pub classes_without_ground_truth: Vec<u32>,
}

/// Mean AP over IoU 0.50:0.95 and over classes that have ground truth.
pub fn map_coco(dets: &[DetectionRecord], gts: &[GroundTruth]) -> Result<MapSummary> {
    if gts.is_empty() {
        return Err(Error::InvalidArgument("mAP needs at least one ground truth".into()));
    }
    let mut det_by_class: BTreeMap<u32, Vec<&DetectionRecord>> = BTreeMap::new();
    for d in dets {
        det_by_class.entry(d.category_id).or_default().push(d);
    }
    let mut gt_by_class: BTreeMap<u32, Vec<&GroundTruth>> = BTreeMap::new();
    for g in gts {
        gt_by_class.entry(g.category_id).or_default().push(g);
    }
    let classes_without_ground_truth = det_by_class
        .keys()
        .filter(|c| !gt_by_class.contains_key(c))
        .copied()
        .collect();
    let table: Vec<ApRow> = iou_thresholds()
        .iter()
        .map(|&t| {
            let per_class: Vec<(u32, f64)> = gt_by_class
                .iter()
                .map(|(&c, g)| {
                    let d = det_by_class.get(&c).map(Vec::as_slice).unwrap_or(&[]);
                    (c, class_ap(d, g, t).expect("class has ground truth"))
                })
                .collect();
            let ap = per_class.iter().map(|p| p.1).sum::<f64>() / per_class.len() as f64;
            ApRow { iou: t, ap, per_class }
        })
        .collect();
    let map = table.iter().map(|r| r.ap).sum::<f64>() / table.len() as f64;
    Ok(MapSummary {
        map,
        table,
        classes_without_ground_truth,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountPair {
    pub image_id: u64,
    pub truth: u64,
    pub predicted: u64,
}

/// `(MAE, sMAPE in percent)`. sMAPE uses `|p−t| / ((p+t)/2)` with 0/0 = 0.
pub fn counting_metrics(pairs: &[CountPair]) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("counting metrics need at least one image".into()));
    }
    let n = pairs.len() as f64;
    let mut abs = 0.0;
    let mut sym = 0.0;
    for p in pairs {
        let (t, q) = (p.truth as f64, p.predicted as f64);
        let d = (q - t).abs();
        abs += d;
        if p.truth + p.predicted > 0 {
            sym += d / ((q + t) / 2.0);
        }
    }
    Ok((abs / n, 100.0 * sym / n))
}

/// Detections with `score >= score_thresh`, optionally of one class only.
pub fn count_from_detections(dets: &[DetectionRecord], score_thresh: f64, category: Option<u32>) -> u64 {
    dets.iter()
        .filter(|d| d.score >= score_thresh && category.is_none_or(|c| d.category_id == c))
        .count() as u64
}

/// CSV with one `image_id,true,predicted` row per image and a final summary row.
pub fn counting_report(pairs: &[CountPair]) -> Result<String> {
    let (mae, smape) = counting_metrics(pairs)?;
    let mut out = String::from("image_id,true,predicted\n");
    for p in pairs {
        writeln!(out, "{},{},{}", p.image_id, p.truth, p.predicted).expect("string write");
    }
    writeln!(out, "# MAE={mae:.6},sMAPE={smape:.6}").expect("string write");
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub map: f64,
    pub ap_table: Vec<ApRow>,
    pub classes_without_ground_truth: Vec<u32>,
    pub mae: f64,
    /// Percent.
    pub smape: f64,
    pub score_threshold: f64,
    pub pairs: Vec<CountPair>,
}

/// Scores predictions against an annotation file. Predictions naming unknown
/// images or categories are reported together as a validation error.
pub fn evaluate(truth: &AnnotationFile, preds: &[DetectionRecord], score_thresh: f64) -> Result<MetricsReport> {
    if !(0.0..=1.0).contains(&score_thresh) {
        return Err(Error::InvalidArgument(format!(
            "score threshold {score_thresh} outside [0, 1]"
        )));
    }
    let images: HashSet<u64> = truth.images.iter().map(|i| i.id).collect();
    let cats: HashSet<u32> = truth.categories.iter().map(|c| c.id).collect();
    let mut problems = Vec::new();
    for (i, p) in preds.iter().enumerate() {
        if !images.contains(&p.image_id) {
            problems.push(format!("prediction {i}: unknown image_id {}", p.image_id));
        }
        if !cats.contains(&p.category_id) {
            problems.push(format!("prediction {i}: unknown category_id {}", p.category_id));
        }
        if !(0.0..=1.0).contains(&p.score) || !p.score.is_finite() {
            problems.push(format!("prediction {i}: score {} outside [0, 1]", p.score));
        }
        if !p.bbox.is_valid() {
            problems.push(format!("prediction {i}: invalid bbox {:?}", p.bbox));
        }
    }
    if !problems.is_empty() {
        return Err(Error::Validation(problems.join("\n")));
    }
    let gts: Vec<GroundTruth> = truth.annotations.iter().map(GroundTruth::from).collect();
    let summary = map_coco(preds, &gts)?;
    let mut image_ids: Vec<u64> = truth.images.iter().map(|i| i.id).collect();
    image_ids.sort_unstable();
    let pairs: Vec<CountPair> = image_ids
        .iter()
        .map(|&id| CountPair {
            image_id: id,
            truth: gts.iter().filter(|g| g.image_id == id).count() as u64,
            predicted: preds
                .iter()
                .filter(|p| p.image_id == id && p.score >= score_thresh)
                .count() as u64,
        })
        .collect();
    let (mae, smape) = counting_metrics(&pairs)?;
    Ok(MetricsReport {
        map: summary.map,
        ap_table: summary.table,
        classes_without_ground_truth: summary.classes_without_ground_truth,
        mae,
        smape,
        score_threshold: score_thresh,
        pairs,
    })
}
