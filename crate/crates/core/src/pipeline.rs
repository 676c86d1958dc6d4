//! The five pipeline commands over on-disk datasets.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::coco::{read_json, write_json_pretty, AnnotationFile, Prediction, Segmentation, Species};
use crate::config::PipelineConfig;
use crate::dataset::{extract_bank, generate_dataset, load_bank, load_dishes, thread_pool, write_bank, BankIndex, Manifest};
use crate::error::{Error, Result};
use crate::imaging::io::{read_rgb, write_rgb};
use crate::imaging::ImageRgb;
use crate::metrics::{counting_report, evaluate, MetricsReport};
use crate::stylize::{stylize_patches, StyleBank, StyleBridge, StyleMode, TILE_PATCHES};

/// Patches held in memory at once while stylizing.
const STYLIZE_CHUNK: usize = 64 * TILE_PATCHES;

fn pool_for(cfg: &PipelineConfig) -> Result<rayon::ThreadPool> {
    let n = if cfg.workers == 0 {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    } else {
        cfg.workers
    };
    thread_pool(n)
}

fn log_config(cmd: &str, cfg: &PipelineConfig) {
    info!("{cmd}: seed {} resolved config:\n{}", cfg.seed, cfg.to_toml_string());
}

fn config_echo(cfg: &PipelineConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

pub fn run_extract(cfg: &PipelineConfig) -> Result<BankIndex> {
    log_config("extract", cfg);
    let annotations = AnnotationFile::load(&cfg.paths.annotations)?;
    let pool = pool_for(cfg)?;
    let (clusters, discarded) = pool.install(|| {
        extract_bank(
            &annotations,
            &cfg.paths.images,
            &cfg.segment,
            cfg.cluster.overlap_threshold,
            cfg.seed,
        )
    })?;
    let index = write_bank(&cfg.paths.bank, &clusters, &discarded, cfg.seed)?;
    for s in Species::ALL {
        info!(
            "{s}: {} clusters kept, {} discarded",
            index.kept.0[s.index()],
            index.discarded.0[s.index()]
        );
    }
    Ok(index)
}

pub fn run_generate(cfg: &PipelineConfig) -> Result<Manifest> {
    log_config("generate", cfg);
    let (bank, index) = load_bank(&cfg.paths.bank)?;
    let dishes = load_dishes(&cfg.paths.dishes)?;
    let pool = pool_for(cfg)?;
    pool.install(|| {
        generate_dataset(
            &cfg.generate,
            &bank,
            &dishes,
            cfg.seed,
            &cfg.paths.dataset,
            &config_echo(cfg),
            &index.discarded,
        )
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StyledPatch {
    pub file_name: String,
    pub style: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StylizationRecord {
    pub mode: StyleMode,
    pub seed: u64,
    pub config: serde_json::Value,
    pub patches: Vec<StyledPatch>,
}

fn copy_file(from: &Path, to: &Path) -> Result<()> {
    if let Some(dir) = to.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::copy(from, to).map(|_| ()).map_err(|e| Error::io(from, e))
}

/// Stylizes `paths.dataset` into `paths.stylized`. The annotation file is
/// copied byte for byte; `stylization.json` records the style of each patch.
pub fn run_stylize(cfg: &PipelineConfig, bridge: Option<&dyn StyleBridge>) -> Result<StylizationRecord> {
    log_config("stylize", cfg);
    let src = &cfg.paths.dataset;
    let dst = &cfg.paths.stylized;
    let ann_path = src.join("annotations.json");
    let annotations = AnnotationFile::load(&ann_path)?;
    std::fs::create_dir_all(dst).map_err(|e| Error::io(dst, e))?;
    copy_file(&ann_path, &dst.join("annotations.json"))?;
    let names: Vec<&str> = annotations.images.iter().map(|e| e.file_name.as_str()).collect();

    let mut patches = Vec::with_capacity(names.len());
    if cfg.stylize.mode == StyleMode::Raw {
        for n in &names {
            copy_file(&src.join(n), &dst.join(n))?;
            patches.push(StyledPatch {
                file_name: n.to_string(),
                style: None,
            });
        }
    } else {
        let bank = StyleBank::load_dir(&cfg.paths.styles)?;
        let workdir = dst.join("jobs");
        let pool = pool_for(cfg)?;
        for (c, chunk) in names.chunks(STYLIZE_CHUNK).enumerate() {
            let images = pool.install(|| {
                use rayon::prelude::*;
                chunk.par_iter().map(|n| read_rgb(&src.join(n))).collect::<Result<Vec<ImageRgb>>>()
            })?;
            let out = pool.install(|| {
                stylize_patches(
                    &images,
                    c * STYLIZE_CHUNK,
                    &bank,
                    &cfg.stylize,
                    cfg.seed,
                    bridge,
                    Some(&workdir),
                )
            })?;
            for ((n, img), style) in chunk.iter().zip(&out.images).zip(out.styles) {
                let path = dst.join(n);
                if let Some(dir) = path.parent() {
                    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                write_rgb(&path, img)?;
                patches.push(StyledPatch {
                    file_name: n.to_string(),
                    style,
                });
            }
        }
    }
    let record = StylizationRecord {
        mode: cfg.stylize.mode,
        seed: cfg.seed,
        config: config_echo(cfg),
        patches,
    };
    write_json_pretty(&dst.join("stylization.json"), &record)?;
    Ok(record)
}

/// Scores `paths.predictions` against `paths.ground_truth`, writing
/// `metrics.json` and `counting.csv` into `paths.metrics`.
pub fn run_evaluate(cfg: &PipelineConfig) -> Result<MetricsReport> {
    log_config("evaluate", cfg);
    let truth = AnnotationFile::load(&cfg.paths.ground_truth)?;
    truth.validate(false)?;
    let preds: Vec<Prediction> = read_json(&cfg.paths.predictions)?;
    let report = evaluate(&truth, &preds, cfg.evaluate.score_threshold)?;
    let out = &cfg.paths.metrics;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_json_pretty(&out.join("metrics.json"), &report)?;
    let csv = counting_report(&report.pairs)?;
    let csv_path = out.join("counting.csv");
    std::fs::write(&csv_path, csv).map_err(|e| Error::io(&csv_path, e))?;
    info!(
        "mAP {:.4}, MAE {:.4}, sMAPE {:.2}%",
        report.map, report.mae, report.smape
    );
    Ok(report)
}

/// Overlay color per species.
pub fn species_color(s: Species) -> [f32; 3] {
    match s {
        Species::SAureus => [1.0, 0.2, 0.2],
        Species::BSubtilis => [0.2, 0.8, 0.2],
        Species::PAeruginosa => [0.2, 0.4, 1.0],
        Species::EColi => [1.0, 0.8, 0.0],
        Species::CAlbicans => [0.9, 0.2, 0.9],
    }
}

/// Draws masks (tinted) and one-pixel box outlines onto a copy of `image`.
/// A box `[x, y, w, h]` is outlined on pixel columns `x` and `x+w−1` and rows
/// `y` and `y+h−1` (after rounding).
pub fn render_overlay(image: &ImageRgb, annotations: &[&crate::coco::Annotation]) -> ImageRgb {
    let mut out = image.clone();
    let (w, h) = out.dims();
    for a in annotations {
        let color = Species::from_id(a.category_id).map(species_color).unwrap_or([1.0; 3]);
        if let Some(Segmentation::Rle(rle)) = &a.segmentation {
            if rle.size == [h, w] {
                let m = rle.to_mask();
                for y in 0..h {
                    for x in 0..w {
                        if m.get(x, y) > 0.0 {
                            let p = out.get(x, y);
                            out.set(x, y, std::array::from_fn(|c| 0.65 * p[c] + 0.35 * color[c]));
                        }
                    }
                }
            }
        }
    }
    for a in annotations {
        let color = Species::from_id(a.category_id).map(species_color).unwrap_or([1.0; 3]);
        let x0 = a.bbox.x.round().max(0.0) as usize;
        let y0 = a.bbox.y.round().max(0.0) as usize;
        let x1 = ((a.bbox.right().round() as usize).saturating_sub(1)).min(w - 1);
        let y1 = ((a.bbox.bottom().round() as usize).saturating_sub(1)).min(h - 1);
        if x0 > x1 || y0 > y1 {
            continue;
        }
        for x in x0..=x1 {
            out.set(x, y0, color);
            out.set(x, y1, color);
        }
        for y in y0..=y1 {
            out.set(x0, y, color);
            out.set(x1, y, color);
        }
    }
    out
}

/// Writes contact sheets of up to four annotated patches (2×2) for the first
/// `count` images of the dataset at `dataset`.
pub fn run_preview(dataset: &Path, out: &Path, count: usize) -> Result<Vec<PathBuf>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let annotations = AnnotationFile::load(&dataset.join("annotations.json"))?;
    let by_image = annotations.annotations_by_image();
    let entries: Vec<_> = annotations.images.iter().take(count).collect();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();
    for (k, group) in entries.chunks(4).enumerate() {
        let cw = group.iter().map(|e| e.width).max().unwrap_or(1);
        let ch = group.iter().map(|e| e.height).max().unwrap_or(1);
        let mut sheet = ImageRgb::new(2 * cw, 2 * ch);
        for (slot, e) in group.iter().enumerate() {
            let img = read_rgb(&dataset.join(&e.file_name))?;
            let anns = by_image.get(&e.id).cloned().unwrap_or_default();
            let drawn = render_overlay(&img, &anns);
            let (ox, oy) = ((slot % 2) * cw, (slot / 2) * ch);
            for y in 0..drawn.height() {
                for x in 0..drawn.width() {
                    sheet.set(ox + x, oy + y, drawn.get(x, y));
                }
            }
        }
        let path = out.join(format!("sheet_{k:03}.png"));
        write_rgb(&path, &sheet)?;
        written.push(path);
    }
    Ok(written)
}
