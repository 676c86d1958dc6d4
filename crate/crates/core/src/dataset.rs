//! On-disk banks and dataset generation.
//!
//! Cluster bank layout: `bank.json` plus `clusters/cluster_{i:05}.png` (RGBA)
//! and a `.json` sidecar with species, member boxes and RLE instance masks.
//!
//! Dataset layout: `images/patch_{i:06}.png`, `annotations.json` (COCO) and
//! `manifest.json`. Each finished patch also leaves `shards/patch_{i:06}.json`;
//! a rerun skips patches whose shard exists, and the annotation file is
//! merged from the shards in index order.

use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{cluster_boxes, BBox};
use crate::coco::{
    read_json, species_categories, write_json_compact, write_json_pretty, Annotation, AnnotationFile, ImageEntry, Rle,
    Segmentation, Species,
};
use crate::compose::{compose_patch, ClusterBank, EmptyDish, GenerationConfig, Placement, Provenance, UsableRegion};
use crate::error::{Error, Result};
use crate::imaging::io::{read_rgb, read_rgba, write_rgb, write_rgba};
use crate::imaging::ImageRgb;
use crate::seed::{derive_seed, rng_for};
use crate::segment::{extract_cluster, ColonyCluster, Extraction, SegmentParams};

/// Seed-path tags keeping the random streams of the stages apart.
const EXTRACT_STREAM: u64 = 0x45_58_54;
const PATCH_STREAM: u64 = 0x50_41_54;

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start {workers} workers: {e}")))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSidecar {
    pub species: Species,
    pub member_boxes: Vec<BBox>,
    pub masks: Vec<Rle>,
    pub source_image: u64,
    pub source_cluster: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SpeciesCounts(pub [usize; 5]);

impl SpeciesCounts {
    pub fn add(&mut self, s: Species) {
        self.0[s.index()] += 1;
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub file: String,
    pub species: Species,
    pub members: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankIndex {
    pub seed: u64,
    pub clusters: Vec<BankEntry>,
    pub kept: SpeciesCounts,
    pub discarded: SpeciesCounts,
}

/// A cluster together with where it came from.
#[derive(Clone, Debug)]
pub struct SourcedCluster {
    pub cluster: ColonyCluster,
    pub image_id: u64,
    pub cluster_index: usize,
}

/// Most frequent member species; ties go to the lower category id.
fn cluster_species(members: &[&Annotation]) -> Result<Species> {
    let mut counts = [0usize; 5];
    for a in members {
        let s = Species::from_id(a.category_id)
            .ok_or_else(|| Error::Validation(format!("annotation {}: unknown species {}", a.id, a.category_id)))?;
        counts[s.index()] += 1;
    }
    let best = (0..5).max_by_key(|&i| (counts[i], std::cmp::Reverse(i))).expect("five species");
    Ok(Species::ALL[best])
}

/// Runs clustering and segmentation over every annotated image.
///
/// Returns the kept clusters in (image id, cluster index) order and the
/// per-species count of discarded clusters.
pub fn extract_bank(
    annotations: &AnnotationFile,
    images_dir: &Path,
    params: &SegmentParams,
    overlap_threshold: f64,
    seed: u64,
) -> Result<(Vec<SourcedCluster>, SpeciesCounts)> {
    annotations.validate(false)?;
    if annotations.images.is_empty() {
        return Err(Error::Validation("annotation file lists no images".into()));
    }
    let by_image = annotations.annotations_by_image();
    let mut entries: Vec<&ImageEntry> = annotations.images.iter().collect();
    entries.sort_by_key(|e| e.id);

    let per_image: Vec<Result<(Vec<SourcedCluster>, SpeciesCounts)>> = entries
        .par_iter()
        .map(|entry| {
            let members = by_image.get(&entry.id).cloned().unwrap_or_default();
            let path = images_dir.join(&entry.file_name);
            let image = read_rgb(&path)?;
            if image.dims() != (entry.width, entry.height) {
                return Err(Error::Validation(format!(
                    "{}: image is {:?}, annotation says {}x{}",
                    path.display(),
                    image.dims(),
                    entry.width,
                    entry.height
                )));
            }
            let boxes: Vec<BBox> = members.iter().map(|a| a.bbox).collect();
            let partition = cluster_boxes(&boxes, overlap_threshold);
            let mut kept = Vec::new();
            let mut discarded = SpeciesCounts::default();
            for (ci, group) in partition.groups.iter().enumerate() {
                let group_members: Vec<&Annotation> = group.iter().map(|&i| members[i]).collect();
                let species = cluster_species(&group_members)?;
                let group_boxes: Vec<BBox> = group.iter().map(|&i| boxes[i]).collect();
                let mut rng = rng_for(seed, &[EXTRACT_STREAM, entry.id, ci as u64]);
                match extract_cluster(&image, &group_boxes, species, params, &mut rng) {
                    Ok(Extraction::Kept(cluster)) => kept.push(SourcedCluster {
                        cluster,
                        image_id: entry.id,
                        cluster_index: ci,
                    }),
                    Ok(Extraction::Discarded) => {
                        warn!("image {} cluster {ci}: empty alpha, discarded", entry.id);
                        discarded.add(species);
                    }
                    Err(e) => {
                        warn!("image {} cluster {ci}: {e}; discarded", entry.id);
                        discarded.add(species);
                    }
                }
            }
            Ok((kept, discarded))
        })
        .collect();

    let mut all = Vec::new();
    let mut discarded = SpeciesCounts::default();
    for r in per_image {
        let (k, d) = r?;
        all.extend(k);
        for i in 0..5 {
            discarded.0[i] += d.0[i];
        }
    }
    Ok((all, discarded))
}

pub fn write_bank(dir: &Path, clusters: &[SourcedCluster], discarded: &SpeciesCounts, seed: u64) -> Result<BankIndex> {
    let cdir = dir.join("clusters");
    create_dir(&cdir)?;
    let mut entries = Vec::with_capacity(clusters.len());
    let mut kept = SpeciesCounts::default();
    for (i, sc) in clusters.iter().enumerate() {
        let c = &sc.cluster;
        let stem = format!("cluster_{i:05}");
        write_rgba(&cdir.join(format!("{stem}.png")), &c.fragment)?;
        let sidecar = ClusterSidecar {
            species: c.species,
            member_boxes: c.member_boxes.clone(),
            masks: c.instance_masks.iter().map(Rle::from_mask).collect(),
            source_image: sc.image_id,
            source_cluster: sc.cluster_index,
        };
        write_json_compact(&cdir.join(format!("{stem}.json")), &sidecar)?;
        entries.push(BankEntry {
            file: format!("clusters/{stem}.png"),
            species: c.species,
            members: c.len(),
        });
        kept.add(c.species);
    }
    let index = BankIndex {
        seed,
        clusters: entries,
        kept,
        discarded: discarded.clone(),
    };
    write_json_pretty(&dir.join("bank.json"), &index)?;
    Ok(index)
}

pub fn load_bank(dir: &Path) -> Result<(ClusterBank, BankIndex)> {
    let index: BankIndex = read_json(&dir.join("bank.json"))?;
    let clusters = index
        .clusters
        .par_iter()
        .map(|e| {
            let png = dir.join(&e.file);
            let fragment = read_rgba(&png)?;
            let side: ClusterSidecar = read_json(&png.with_extension("json"))?;
            let masks = side.masks.iter().map(Rle::to_mask).collect();
            ColonyCluster::from_instances(fragment, masks, side.species)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((ClusterBank::new(clusters), index))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DishEntry {
    pub file: PathBuf,
    pub region: UsableRegion,
}

/// Reads a dish list; image files resolve against the list's directory.
pub fn load_dishes(list: &Path) -> Result<Vec<EmptyDish>> {
    let entries: Vec<DishEntry> = read_json(list)?;
    if entries.is_empty() {
        return Err(Error::Config(format!("{} lists no dishes", list.display())));
    }
    let base = list.parent().unwrap_or(Path::new("."));
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| EmptyDish::new(i, read_rgb(&base.join(&e.file))?, e.region))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardAnnotation {
    pub category_id: u32,
    pub bbox: BBox,
    pub segmentation: Rle,
    pub area: u64,
}

/// Per-patch record written next to the image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatchShard {
    pub index: usize,
    pub file_name: String,
    pub size: usize,
    pub provenance: Provenance,
    /// Fragment rectangles in placement order.
    pub placements: Vec<Placement>,
    pub annotations: Vec<ShardAnnotation>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Partial,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: RunStatus,
    pub seed: u64,
    /// Full resolved configuration of the run.
    pub config: serde_json::Value,
    pub n_patches: usize,
    pub completed: Vec<usize>,
    /// Annotations per species.
    pub colonies_per_class: SpeciesCounts,
    /// Patches per species.
    pub patches_per_class: SpeciesCounts,
    pub short_patches: usize,
    pub mean_colonies: f64,
    pub mean_requested: f64,
    pub discarded_clusters: SpeciesCounts,
}

pub fn patch_file_name(index: usize) -> String {
    format!("patch_{index:06}.png")
}

fn shard_path(out: &Path, index: usize) -> PathBuf {
    out.join("shards").join(format!("patch_{index:06}.json"))
}

/// Seed of patch `index`'s generator.
pub fn patch_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, &[PATCH_STREAM, index as u64])
}

fn generate_one(
    cfg: &GenerationConfig,
    bank: &ClusterBank,
    dishes: &[EmptyDish],
    master: u64,
    index: usize,
    out: &Path,
) -> Result<PatchShard> {
    let seed = patch_seed(master, index);
    let mut rng = rng_for(master, &[PATCH_STREAM, index as u64]);
    let patch = compose_patch(cfg, bank, dishes, &mut rng, seed)?;
    let file_name = patch_file_name(index);
    write_rgb(&out.join("images").join(&file_name), &patch.image)?;
    let shard = PatchShard {
        index,
        file_name,
        size: cfg.patch_size,
        provenance: patch.provenance,
        placements: patch.placements,
        annotations: patch
            .annotations
            .into_iter()
            .map(|a| ShardAnnotation {
                category_id: a.species.id(),
                bbox: a.bbox,
                area: a.mask.area(),
                segmentation: a.mask,
            })
            .collect(),
    };
    let path = shard_path(out, index);
    let tmp = path.with_extension("json.tmp");
    write_json_compact(&tmp, &shard)?;
    std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
    Ok(shard)
}

fn read_shard(out: &Path, index: usize) -> Option<PatchShard> {
    let path = shard_path(out, index);
    let image = out.join("images").join(patch_file_name(index));
    if !path.exists() || !image.exists() {
        return None;
    }
    read_json(&path).ok().filter(|s: &PatchShard| s.index == index)
}

/// Merges shards into one COCO file; ids count from 1 in patch order.
pub fn merge_shards(shards: &[PatchShard]) -> AnnotationFile {
    let mut file = AnnotationFile {
        categories: species_categories(),
        ..Default::default()
    };
    let mut next = 1u64;
    for s in shards {
        let image_id = s.index as u64 + 1;
        file.images.push(ImageEntry {
            id: image_id,
            file_name: format!("images/{}", s.file_name),
            width: s.size,
            height: s.size,
            dish_id: Some(s.provenance.dish_id),
            seed: Some(s.provenance.seed),
        });
        for a in &s.annotations {
            file.annotations.push(Annotation {
                id: next,
                image_id,
                category_id: a.category_id,
                bbox: a.bbox,
                segmentation: Some(Segmentation::Rle(a.segmentation.clone())),
                area: a.area as f64,
                iscrowd: 0,
            });
            next += 1;
        }
    }
    file
}

fn summarize(
    shards: &[PatchShard],
    cfg: &GenerationConfig,
    seed: u64,
    config_echo: &serde_json::Value,
    discarded: &SpeciesCounts,
    status: RunStatus,
) -> Manifest {
    let mut colonies = SpeciesCounts::default();
    let mut patches = SpeciesCounts::default();
    let mut short = 0;
    let mut requested = 0usize;
    for s in shards {
        patches.add(s.provenance.species);
        for a in &s.annotations {
            colonies.0[Species::from_id(a.category_id).expect("written by us").index()] += 1;
        }
        if s.annotations.len() < s.provenance.requested {
            short += 1;
        }
        requested += s.provenance.requested;
    }
    let n = shards.len().max(1) as f64;
    Manifest {
        status,
        seed,
        config: config_echo.clone(),
        n_patches: cfg.n_patches,
        completed: shards.iter().map(|s| s.index).collect(),
        mean_colonies: colonies.total() as f64 / n,
        mean_requested: requested as f64 / n,
        colonies_per_class: colonies,
        patches_per_class: patches,
        short_patches: short,
        discarded_clusters: discarded.clone(),
    }
}

/// Generates `cfg.n_patches` patches into `out` using the current rayon pool.
///
/// Patches already finished by an earlier run (shard and image present) are
/// reused. On failure a partial manifest listing the finished patches is
/// written before the error is returned.
pub fn generate_dataset(
    cfg: &GenerationConfig,
    bank: &ClusterBank,
    dishes: &[EmptyDish],
    seed: u64,
    out: &Path,
    config_echo: &serde_json::Value,
    discarded: &SpeciesCounts,
) -> Result<Manifest> {
    cfg.validate()?;
    if bank.is_empty() {
        return Err(Error::Config("cluster bank is empty".into()));
    }
    if dishes.is_empty() {
        return Err(Error::Config("no empty dishes".into()));
    }
    for d in dishes {
        if !d.admits(cfg.patch_size) {
            warn!(
                "dish {}: usable region may not admit a {}px crop at every angle",
                d.id, cfg.patch_size
            );
        }
    }
    create_dir(&out.join("images"))?;
    create_dir(&out.join("shards"))?;

    let results: Vec<Result<PatchShard>> = (0..cfg.n_patches)
        .into_par_iter()
        .map(|i| match read_shard(out, i) {
            Some(s) => Ok(s),
            None => generate_one(cfg, bank, dishes, seed, i, out),
        })
        .collect();
    let mut shards = Vec::with_capacity(results.len());
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => shards.push(s),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(e) = first_err {
        let manifest = summarize(&shards, cfg, seed, config_echo, discarded, RunStatus::Partial);
        write_json_pretty(&out.join("manifest.json"), &manifest)?;
        return Err(e);
    }
    let file = merge_shards(&shards);
    file.validate(true)?;
    file.save(&out.join("annotations.json"))?;
    let manifest = summarize(&shards, cfg, seed, config_echo, discarded, RunStatus::Complete);
    write_json_pretty(&out.join("manifest.json"), &manifest)?;
    info!(
        "generated {} patches, mean {:.2} colonies, {} short",
        shards.len(),
        manifest.mean_colonies,
        manifest.short_patches
    );
    Ok(manifest)
}

/// Images of a dataset in annotation order, with their ids.
pub fn load_dataset_images(dir: &Path, file: &AnnotationFile) -> Result<Vec<(u64, ImageRgb)>> {
    file.images
        .par_iter()
        .map(|e| Ok((e.id, read_rgb(&dir.join(&e.file_name))?)))
        .collect()
}
