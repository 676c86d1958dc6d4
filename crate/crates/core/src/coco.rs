//! COCO-style annotation files, uncompressed RLE masks and the fixed species list.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::cluster::BBox;
use crate::error::{Error, Result};
use crate::imaging::Mask;

/// The five microbe classes. Category ids are fixed: 1..=5 in declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Species {
    SAureus = 1,
    BSubtilis = 2,
    PAeruginosa = 3,
    EColi = 4,
    CAlbicans = 5,
}

impl Species {
    pub const ALL: [Species; 5] = [
        Species::SAureus,
        Species::BSubtilis,
        Species::PAeruginosa,
        Species::EColi,
        Species::CAlbicans,
    ];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn index(self) -> usize {
        self as usize - 1
    }

    pub fn from_id(id: u32) -> Option<Species> {
        Species::ALL.get((id as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::SAureus => "S.aureus",
            Species::BSubtilis => "B.subtilis",
            Species::PAeruginosa => "P.aeruginosa",
            Species::EColi => "E.coli",
            Species::CAlbicans => "C.albicans",
        }
    }

    pub fn from_name(name: &str) -> Option<Species> {
        Species::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for Species {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl TryFrom<u32> for Species {
    type Error = String;

    fn try_from(id: u32) -> std::result::Result<Self, Self::Error> {
        Species::from_id(id).ok_or_else(|| format!("unknown species category id {id}"))
    }
}

impl From<Species> for u32 {
    fn from(s: Species) -> u32 {
        s.id()
    }
}

/// Uncompressed COCO run-length encoding: column-major runs, starting with zeros.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rle {
    /// `[height, width]`
    pub size: [usize; 2],
    pub counts: Vec<u32>,
}

impl Rle {
    /// Encodes pixels with value ≥ 0.5 as foreground.
    pub fn from_mask(mask: &Mask) -> Rle {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let on = mask.get(x, y) >= 0.5;
                if on != current {
                    counts.push(run);
                    run = 0;
                    current = on;
                }
                run += 1;
            }
        }
        counts.push(run);
        Rle { size: [h, w], counts }
    }

    pub fn height(&self) -> usize {
        self.size[0]
    }

    pub fn width(&self) -> usize {
        self.size[1]
    }

    pub fn to_mask(&self) -> Mask {
        let (h, w) = (self.height(), self.width());
        let mut m = Mask::zeros(w, h);
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            if i % 2 == 1 {
                for p in pos..pos + c as usize {
                    m.set(p / h, p % h, 1.0);
                }
            }
            pos += c as usize;
        }
        m
    }

    /// Number of foreground pixels.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| c as u64).sum()
    }

    /// Tight box of the foreground computed from the runs alone.
    pub fn tight_box(&self) -> Option<BBox> {
        let h = self.height();
        if h == 0 {
            return None;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        let mut pos = 0usize;
        for (i, &c) in self.counts.iter().enumerate() {
            let c = c as usize;
            if i % 2 == 1 && c > 0 {
                let (start, end) = (pos, pos + c - 1);
                let (sx, sy) = (start / h, start % h);
                let (ex, ey) = (end / h, end % h);
                x0 = x0.min(sx);
                x1 = x1.max(ex);
                if sx == ex {
                    y0 = y0.min(sy);
                    y1 = y1.max(ey);
                } else {
                    // a run crossing a column boundary touches both the last and first row
                    y0 = 0;
                    y1 = h - 1;
                }
            }
            pos += c;
        }
        (x0 != usize::MAX).then(|| {
            BBox::new(x0 as f64, y0 as f64, (x1 - x0 + 1) as f64, (y1 - y0 + 1) as f64)
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    Rle(Rle),
    Polygons(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: u64,
    pub file_name: String,
    pub width: usize,
    pub height: usize,
    /// Index of the empty dish a synthetic patch was cut from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dish_id: Option<usize>,
    /// Per-patch generator seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u32,
    pub name: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segmentation: Option<Segmentation>,
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub iscrowd: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotationFile {
    pub images: Vec<ImageEntry>,
    pub categories: Vec<Category>,
    pub annotations: Vec<Annotation>,
}

/// A detector output record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: u64,
    pub category_id: u32,
    pub bbox: BBox,
    pub score: f64,
}

pub fn species_categories() -> Vec<Category> {
    Species::ALL
        .iter()
        .map(|s| Category {
            id: s.id(),
            name: s.name().to_string(),
        })
        .collect()
}

impl AnnotationFile {
    pub fn with_species_categories() -> Self {
        AnnotationFile {
            categories: species_categories(),
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json_compact(path, self)
    }

    /// Annotations grouped by image id, in file order.
    pub fn annotations_by_image(&self) -> HashMap<u64, Vec<&Annotation>> {
        let mut by_image: HashMap<u64, Vec<&Annotation>> = HashMap::new();
        for a in &self.annotations {
            by_image.entry(a.image_id).or_default().push(a);
        }
        by_image
    }

    /// Checks id uniqueness, referential integrity, box validity and, when
    /// `require_rle` is set, that every bbox equals its RLE mask's tight box.
    pub fn validate(&self, require_rle: bool) -> Result<()> {
        let mut problems = Vec::new();
        let mut image_dims = HashMap::new();
        for img in &self.images {
            if image_dims.insert(img.id, (img.width, img.height)).is_some() {
                problems.push(format!("duplicate image id {}", img.id));
            }
        }
        let mut cat_ids = HashSet::new();
        for c in &self.categories {
            if !cat_ids.insert(c.id) {
                problems.push(format!("duplicate category id {}", c.id));
            }
        }
        let mut ann_ids = HashSet::new();
        for a in &self.annotations {
            if !ann_ids.insert(a.id) {
                problems.push(format!("duplicate annotation id {}", a.id));
            }
            if !cat_ids.contains(&a.category_id) {
                problems.push(format!("annotation {}: unknown category {}", a.id, a.category_id));
            }
            let Some(&(w, h)) = image_dims.get(&a.image_id) else {
                problems.push(format!("annotation {}: unknown image {}", a.id, a.image_id));
                continue;
            };
            if !a.bbox.is_valid() || !a.bbox.within(w as f64, h as f64) {
                problems.push(format!("annotation {}: bbox {:?} invalid for {w}x{h}", a.id, a.bbox));
            }
            if require_rle {
                match &a.segmentation {
                    Some(Segmentation::Rle(rle)) => {
                        if rle.size != [h, w] {
                            problems.push(format!("annotation {}: RLE size {:?} != image", a.id, rle.size));
                        }
                        if rle.tight_box() != Some(a.bbox) {
                            problems.push(format!(
                                "annotation {}: bbox {:?} != mask box {:?}",
                                a.id,
                                a.bbox,
                                rle.tight_box()
                            ));
                        }
                        if a.area <= 0.0 || a.area != rle.area() as f64 {
                            problems.push(format!("annotation {}: area {} != mask area", a.id, a.area));
                        }
                    }
                    _ => problems.push(format!("annotation {}: missing RLE segmentation", a.id)),
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems.join("; ")))
        }
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::json(path, e))
}

pub fn write_json_compact<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_json_pretty<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}
