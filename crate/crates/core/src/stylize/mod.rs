//! Patch stylization.
//!
//! `semi` and `full` use the built-in Lab moment transfer at two strengths
//! with one random bank style per patch. `external` packs patches four at a
//! time into 2×2 tiles, one random style per tile, and hands each tile to a
//! neural stylizer through [`bridge`].

pub mod bridge;
mod gram;
mod transfer;

use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bridge::{tile_patches, untile, BridgeJob, ProcessBridge, StyleBridge, BRIDGE_ENV};
pub use gram::{
    gram, style_loss, style_loss_terms, DefaultExtractor, FeatureExtractor, FeatureLayer, FeatureMaps, GramMatrix,
};
pub use transfer::{color_transfer_lab, color_transfer_lab_space, LabStats};

use crate::error::{Error, Result};
use crate::imaging::io::{read_rgb, write_rgb};
use crate::imaging::ImageRgb;
use crate::seed::rng_for;

/// Seed-path tag for style draws.
const STYLE_STREAM: u64 = 0x57_59_4c_45;

/// Patches per external tile.
pub const TILE_PATCHES: usize = 4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleMode {
    #[default]
    Raw,
    Semi,
    Full,
    External,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StylizeConfig {
    pub mode: StyleMode,
    /// Built-in transfer strength for `semi`.
    pub semi_strength: f64,
    /// Built-in transfer strength for `full`.
    pub full_strength: f64,
    /// λ passed to the external stylizer (0.02 for a light, 0.05 for a strong style).
    pub style_lambda: f64,
    /// External jobs running at once.
    pub max_bridge_jobs: usize,
    /// Chain `<output>.weights` of each job into the next one of its lane.
    pub warm_start: bool,
}

impl Default for StylizeConfig {
    fn default() -> Self {
        StylizeConfig {
            mode: StyleMode::Raw,
            semi_strength: 0.4,
            full_strength: 0.8,
            style_lambda: 0.05,
            max_bridge_jobs: 1,
            warm_start: true,
        }
    }
}

impl StylizeConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.semi_strength) || !unit(self.full_strength) || !unit(self.style_lambda) {
            return Err(Error::Config(
                "semi_strength, full_strength and style_lambda must lie in [0, 1]".into(),
            ));
        }
        if self.max_bridge_jobs == 0 {
            return Err(Error::Config("max_bridge_jobs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Style {
    pub id: String,
    pub image: ImageRgb,
    /// File the style was loaded from, if any.
    pub path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct StyleBank {
    styles: Vec<Style>,
}

impl StyleBank {
    pub fn new(styles: Vec<Style>) -> Result<Self> {
        if styles.is_empty() {
            return Err(Error::InvalidArgument("style bank is empty".into()));
        }
        Ok(StyleBank { styles })
    }

    /// Every `*.png` in `dir`, sorted by file name; ids are the file stems.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
            .collect();
        files.sort();
        let styles = files
            .into_iter()
            .map(|p| {
                Ok(Style {
                    id: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                    image: read_rgb(&p)?,
                    path: Some(p),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        StyleBank::new(styles).map_err(|_| Error::Config(format!("no style PNGs in {}", dir.display())))
    }

    pub fn len(&self) -> usize {
        self.styles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.styles.is_empty()
    }

    pub fn get(&self, i: usize) -> &Style {
        &self.styles[i]
    }

    pub fn styles(&self) -> &[Style] {
        &self.styles
    }
}

/// Style index for unit `index` (a patch, or a tile in external mode).
pub fn choose_style(seed: u64, index: usize, bank_len: usize) -> usize {
    rng_for(seed, &[STYLE_STREAM, index as u64]).random_range(0..bank_len)
}

#[derive(Clone, Debug)]
pub struct StylizeOutcome {
    pub images: Vec<ImageRgb>,
    /// Style id per patch; `None` in raw mode.
    pub styles: Vec<Option<String>>,
    /// External tile jobs that were run.
    pub jobs: Vec<BridgeJob>,
}

/// Stylizes patches in memory; `first_index` is the dataset index of
/// `patches[0]` and must be a multiple of [`TILE_PATCHES`] in external mode.
/// `workdir` and `bridge` are needed only in external mode.
pub fn stylize_patches(
    patches: &[ImageRgb],
    first_index: usize,
    bank: &StyleBank,
    cfg: &StylizeConfig,
    seed: u64,
    bridge: Option<&dyn StyleBridge>,
    workdir: Option<&Path>,
) -> Result<StylizeOutcome> {
    let builtin = |strength: f64| {
        let picks: Vec<usize> = (0..patches.len())
            .map(|i| choose_style(seed, first_index + i, bank.len()))
            .collect();
        let images = patches
            .par_iter()
            .zip(&picks)
            .map(|(p, &s)| color_transfer_lab(p, &bank.get(s).image, strength))
            .collect();
        StylizeOutcome {
            images,
            styles: picks.iter().map(|&s| Some(bank.get(s).id.clone())).collect(),
            jobs: Vec::new(),
        }
    };
    match cfg.mode {
        StyleMode::Raw => Ok(StylizeOutcome {
            images: patches.to_vec(),
            styles: vec![None; patches.len()],
            jobs: Vec::new(),
        }),
        StyleMode::Semi => Ok(builtin(cfg.semi_strength)),
        StyleMode::Full => Ok(builtin(cfg.full_strength)),
        StyleMode::External => {
            let bridge = bridge.ok_or_else(|| {
                Error::Bridge(format!(
                    "external mode needs a stylizer ({BRIDGE_ENV}); use mode = \"semi\" or \"full\" instead"
                ))
            })?;
            let workdir = workdir.ok_or_else(|| Error::InvalidArgument("external mode needs a work directory".into()))?;
            if !first_index.is_multiple_of(TILE_PATCHES) {
                return Err(Error::InvalidArgument("external chunks must start on a tile boundary".into()));
            }
            stylize_external(patches, first_index / TILE_PATCHES, bank, cfg, seed, bridge, workdir)
        }
    }
}

fn stylize_external(
    patches: &[ImageRgb],
    first_tile: usize,
    bank: &StyleBank,
    cfg: &StylizeConfig,
    seed: u64,
    bridge: &dyn StyleBridge,
    workdir: &Path,
) -> Result<StylizeOutcome> {
    std::fs::create_dir_all(workdir).map_err(|e| Error::io(workdir, e))?;
    let groups: Vec<&[ImageRgb]> = patches.chunks(TILE_PATCHES).collect();
    let picks: Vec<usize> = (0..groups.len())
        .map(|t| choose_style(seed, first_tile + t, bank.len()))
        .collect();

    let mut style_files = Vec::with_capacity(bank.len());
    for (i, s) in bank.styles().iter().enumerate() {
        style_files.push(match &s.path {
            Some(p) => p.clone(),
            None => {
                let p = workdir.join(format!("style_{i:03}.png"));
                write_rgb(&p, &s.image)?;
                p
            }
        });
    }

    let mut jobs = Vec::with_capacity(groups.len());
    for (t, group) in groups.iter().enumerate() {
        let refs: Vec<&ImageRgb> = group.iter().collect();
        let content = workdir.join(format!("tile_{:05}.png", first_tile + t));
        write_rgb(&content, &tile_patches(&refs)?)?;
        jobs.push(BridgeJob {
            content,
            style: style_files[picks[t]].clone(),
            lambda: cfg.style_lambda,
            output: workdir.join(format!("tile_{:05}_out.png", first_tile + t)),
            warm_start: None,
        });
    }

    let lanes = cfg.max_bridge_jobs.min(jobs.len()).max(1);
    let run_lane = |lane: usize| -> Result<Vec<(usize, BridgeJob)>> {
        let mut done = Vec::new();
        let mut previous: Option<PathBuf> = None;
        for t in (lane..jobs.len()).step_by(lanes) {
            let mut job = jobs[t].clone();
            if cfg.warm_start {
                job.warm_start = previous.clone().filter(|p| p.exists());
            }
            let job_file = workdir.join(format!("tile_{:05}.json", first_tile + t));
            let text = serde_json::to_vec_pretty(&job).expect("job serializes");
            std::fs::write(&job_file, text).map_err(|e| Error::io(&job_file, e))?;
            bridge.run(&job, &job_file)?;
            previous = Some(job.weights_path());
            done.push((t, job));
        }
        Ok(done)
    };
    let lane_results: Vec<Result<Vec<(usize, BridgeJob)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..lanes).map(|l| s.spawn(move || run_lane(l))).collect();
        handles.into_iter().map(|h| h.join().expect("bridge lane panicked")).collect()
    });
    let mut finished: Vec<(usize, BridgeJob)> = Vec::with_capacity(jobs.len());
    for r in lane_results {
        finished.extend(r?);
    }
    finished.sort_by_key(|(t, _)| *t);

    let mut images = Vec::with_capacity(patches.len());
    let mut styles = Vec::with_capacity(patches.len());
    for ((t, job), group) in finished.iter().zip(&groups) {
        let out = read_rgb(&job.output)
            .map_err(|e| Error::Bridge(format!("stylizer produced no readable output for tile {t}: {e}")))?;
        let (w, h) = group[0].dims();
        if out.dims() != (2 * w, 2 * h) {
            return Err(Error::Bridge(format!(
                "stylizer output for tile {t} is {:?}, expected {:?}",
                out.dims(),
                (2 * w, 2 * h)
            )));
        }
        images.extend(untile(&out, group.len()));
        styles.extend(std::iter::repeat_n(Some(bank.get(picks[*t]).id.clone()), group.len()));
    }
    Ok(StylizeOutcome {
        images,
        styles,
        jobs: finished.into_iter().map(|(_, j)| j).collect(),
    })
}
