//! Patch composition: random empty-dish crops with transformed colony
//! clusters pasted on them without overlap.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};

use crate::cluster::BBox;
use crate::coco::{Rle, Species};
use crate::error::{Error, Result};
use crate::imaging::{sample_rgb, Geometry, ImageRgb, Mask};
use crate::segment::ColonyCluster;

/// Background crops give up after this many rejected positions.
pub const CROP_RETRIES: usize = 1000;

/// Placement gives up once this many times `max_place_attempts` positions
/// have been rejected in one patch.
pub const FAILURE_BUDGET_FACTOR: usize = 50;

/// Part of an empty-dish image that shows agar only. Coordinates are pixel
/// centers; a rectangle covers pixels `x..x+w` and `y..y+h`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum UsableRegion {
    Rect { x: f64, y: f64, w: f64, h: f64 },
    Circle { cx: f64, cy: f64, r: f64 },
}

impl UsableRegion {
    pub fn contains(&self, px: f64, py: f64) -> bool {
        const EPS: f64 = 1e-9;
        match *self {
            UsableRegion::Rect { x, y, w, h } => {
                px >= x - EPS && py >= y - EPS && px <= x + w - 1.0 + EPS && py <= y + h - 1.0 + EPS
            }
            UsableRegion::Circle { cx, cy, r } => (px - cx).powi(2) + (py - cy).powi(2) <= r * r + EPS,
        }
    }

    /// Axis-aligned extent `(x0, y0, x1, y1)` of the pixel centers covered.
    fn extent(&self) -> (f64, f64, f64, f64) {
        match *self {
            UsableRegion::Rect { x, y, w, h } => (x, y, x + w - 1.0, y + h - 1.0),
            UsableRegion::Circle { cx, cy, r } => (cx - r, cy - r, cx + r, cy + r),
        }
    }

    /// Side of the largest axis-aligned square of pixel centers that fits at any angle.
    fn inscribed_square(&self) -> f64 {
        match *self {
            UsableRegion::Rect { w, h, .. } => (w.min(h) - 1.0) / std::f64::consts::SQRT_2,
            UsableRegion::Circle { r, .. } => r * std::f64::consts::SQRT_2,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmptyDish {
    pub id: usize,
    pub image: ImageRgb,
    pub region: UsableRegion,
}

impl EmptyDish {
    pub fn new(id: usize, image: ImageRgb, region: UsableRegion) -> Result<Self> {
        let (w, h) = image.dims();
        let (x0, y0, x1, y1) = region.extent();
        if !(x0 >= 0.0 && y0 >= 0.0 && x1 <= (w - 1) as f64 && y1 <= (h - 1) as f64 && x1 >= x0 && y1 >= y0) {
            return Err(Error::Config(format!(
                "dish {id}: usable region {region:?} does not fit the {w}x{h} image"
            )));
        }
        Ok(EmptyDish { id, image, region })
    }

    /// Whether a `patch`-sized crop fits the region at every angle.
    pub fn admits(&self, patch: usize) -> bool {
        self.region.inscribed_square() >= patch.saturating_sub(1) as f64
    }
}

#[derive(Clone, Debug)]
pub struct BackgroundCrop {
    pub image: ImageRgb,
    pub angle_deg: f64,
    /// Source positions of the four corner pixels (TL, TR, BL, BR).
    pub corners: [(f64, f64); 4],
}

pub fn sample_exponential<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
}

/// `round(x)` for `x ~ Exponential(mean)`; zero is a valid count.
pub fn sample_colony_count<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    assert!(mean > 0.0, "count mean must be positive");
    sample_exponential(rng, mean).round() as usize
}

/// Crops at a uniformly random angle.
pub fn crop_background<R: Rng + ?Sized>(dish: &EmptyDish, rng: &mut R, patch: usize) -> Result<BackgroundCrop> {
    let angle = rng.random_range(0.0..360.0);
    crop_background_at(dish, angle, rng, patch)
}

/// Rotates the dish by `angle_deg` and takes a random `patch × patch` crop
/// whose corner pixels map into the usable region.
pub fn crop_background_at<R: Rng + ?Sized>(
    dish: &EmptyDish,
    angle_deg: f64,
    rng: &mut R,
    patch: usize,
) -> Result<BackgroundCrop> {
    if patch == 0 {
        return Err(Error::InvalidArgument("patch size must be positive".into()));
    }
    let (w, h) = dish.image.dims();
    let g = Geometry::new(w, h, angle_deg, false, false);
    let (cw, ch) = g.output_size();
    if cw < patch || ch < patch {
        return Err(Error::Config(format!(
            "dish {} is smaller than a {patch}px patch",
            dish.id
        )));
    }
    // Canvas-space extent of the region, to aim the position draws.
    let t = angle_deg.to_radians();
    let (c, s) = (t.cos(), t.sin());
    let (x0, y0, x1, y1) = dish.region.extent();
    let (mut u0, mut v0, mut u1, mut v1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for (px, py) in [(x0, y0), (x1, y0), (x0, y1), (x1, y1)] {
        let dx = px - (w as f64 - 1.0) / 2.0;
        let dy = py - (h as f64 - 1.0) / 2.0;
        let u = dx * c + dy * s + (cw as f64 - 1.0) / 2.0;
        let v = -dx * s + dy * c + (ch as f64 - 1.0) / 2.0;
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    let lo_x = (u0.floor().max(0.0) as usize).min(cw - patch);
    let lo_y = (v0.floor().max(0.0) as usize).min(ch - patch);
    let hi_x = ((u1.ceil() as isize - patch as isize + 1).max(0) as usize).clamp(lo_x, cw - patch);
    let hi_y = ((v1.ceil() as isize - patch as isize + 1).max(0) as usize).clamp(lo_y, ch - patch);
    for _ in 0..CROP_RETRIES {
        let ox = rng.random_range(lo_x..=hi_x);
        let oy = rng.random_range(lo_y..=hi_y);
        let corners = [
            g.source_point(ox, oy),
            g.source_point(ox + patch - 1, oy),
            g.source_point(ox, oy + patch - 1),
            g.source_point(ox + patch - 1, oy + patch - 1),
        ];
        if !corners.iter().all(|&(x, y)| dish.region.contains(x, y)) {
            continue;
        }
        let image = ImageRgb::from_fn(patch, patch, |x, y| {
            let (sx, sy) = g.source_point(ox + x, oy + y);
            // The region is convex and inside the pixel-center hull.
            let sx = sx.clamp(0.0, (w - 1) as f64);
            let sy = sy.clamp(0.0, (h - 1) as f64);
            sample_rgb(&dish.image, sx, sy).expect("clamped into the image")
        });
        return Ok(BackgroundCrop {
            image,
            angle_deg,
            corners,
        });
    }
    Err(Error::Config(format!(
        "no {patch}px crop of dish {} fits its usable region at {angle_deg:.2}°",
        dish.id
    )))
}

/// Integer rectangle of a placed fragment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Placement {
    pub fn intersects(&self, o: &Placement) -> bool {
        self.x < o.x + o.w && o.x < self.x + self.w && self.y < o.y + o.h && o.y < self.y + self.h
    }
}

/// Tracks the fragment rectangles already placed on a patch.
#[derive(Clone, Debug, Default)]
pub struct Canvas {
    pub size: usize,
    pub placed: Vec<Placement>,
}

impl Canvas {
    pub fn new(size: usize) -> Self {
        Canvas {
            size,
            placed: Vec::new(),
        }
    }

    /// Tries up to `max_attempts` uniform in-bounds positions and records the
    /// first one that overlaps no earlier rectangle.
    pub fn try_place<R: Rng + ?Sized>(
        &mut self,
        w: usize,
        h: usize,
        rng: &mut R,
        max_attempts: usize,
    ) -> Option<Placement> {
        if w == 0 || h == 0 || w > self.size || h > self.size {
            return None;
        }
        for _ in 0..max_attempts {
            let p = Placement {
                x: rng.random_range(0..=self.size - w),
                y: rng.random_range(0..=self.size - h),
                w,
                h,
            };
            if self.placed.iter().all(|q| !q.intersects(&p)) {
                self.placed.push(p);
                return Some(p);
            }
        }
        None
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub patch_size: usize,
    /// Mean of the exponential colony-count distribution.
    pub count_mean: f64,
    pub max_place_attempts: usize,
    /// Weights for S. aureus, B. subtilis, P. aeruginosa, E. coli, C. albicans.
    pub species_weights: [f64; 5],
    pub n_patches: usize,
    /// When set, each placed cluster is rescaled by a uniform factor in this range.
    pub scale_range: Option<[f64; 2]>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            patch_size: 512,
            count_mean: 10.0,
            max_place_attempts: 100,
            species_weights: [1.0; 5],
            n_patches: 100,
            scale_range: None,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 {
            return bad("patch_size must be positive".into());
        }
        if !(self.count_mean > 0.0) || !self.count_mean.is_finite() {
            return bad(format!("count_mean must be positive, got {}", self.count_mean));
        }
        if self.max_place_attempts == 0 {
            return bad("max_place_attempts must be at least 1".into());
        }
        if self.species_weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite())
            || self.species_weights.iter().all(|&w| w == 0.0)
        {
            return bad("species_weights must be nonnegative and not all zero".into());
        }
        if let Some([lo, hi]) = self.scale_range {
            if !(lo > 0.0 && hi >= lo) {
                return bad(format!("scale_range [{lo}, {hi}] must satisfy 0 < lo <= hi"));
            }
        }
        Ok(())
    }
}

/// Extracted clusters grouped by species.
#[derive(Clone, Debug, Default)]
pub struct ClusterBank {
    by_species: [Vec<ColonyCluster>; 5],
}

impl ClusterBank {
    pub fn new(clusters: impl IntoIterator<Item = ColonyCluster>) -> Self {
        let mut bank = ClusterBank::default();
        for c in clusters {
            bank.by_species[c.species.index()].push(c);
        }
        bank
    }

    pub fn of(&self, species: Species) -> &[ColonyCluster] {
        &self.by_species[species.index()]
    }

    pub fn len(&self) -> usize {
        self.by_species.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PatchAnnotation {
    pub species: Species,
    pub bbox: BBox,
    pub mask: Rle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub dish_id: usize,
    pub background_angle: f64,
    pub species: Species,
    /// Colony count drawn before placement.
    pub requested: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SyntheticPatch {
    pub image: ImageRgb,
    pub annotations: Vec<PatchAnnotation>,
    pub placements: Vec<Placement>,
    pub provenance: Provenance,
}

impl SyntheticPatch {
    /// Fewer colonies were placed than requested.
    pub fn is_short(&self) -> bool {
        self.annotations.len() < self.provenance.requested
    }
}

/// Pastes the cluster fragment at `p` with `out = α·c + (1−α)·bg`.
fn blend(canvas: &mut ImageRgb, cluster: &ColonyCluster, p: Placement) {
    let (color, alpha) = (cluster.fragment.color(), cluster.fragment.alpha());
    for y in 0..p.h {
        for x in 0..p.w {
            let a = alpha.get(x, y);
            if a == 0.0 {
                continue;
            }
            let c = color.get(x, y);
            let px = if a == 1.0 {
                c
            } else {
                let bg = canvas.get(p.x + x, p.y + y);
                std::array::from_fn(|k| (a * c[k] + (1.0 - a) * bg[k]).clamp(0.0, 1.0))
            };
            canvas.set(p.x + x, p.y + y, px);
        }
    }
}

/// Annotations of a placed cluster in patch coordinates.
fn place_annotations(cluster: &ColonyCluster, p: Placement, size: usize) -> Vec<PatchAnnotation> {
    cluster
        .instance_masks
        .iter()
        .map(|m| {
            let mut full = Mask::zeros(size, size);
            for y in 0..p.h {
                for x in 0..p.w {
                    if m.get(x, y) > 0.0 {
                        full.set(p.x + x, p.y + y, 1.0);
                    }
                }
            }
            let mask = Rle::from_mask(&full);
            let bbox = mask.tight_box().expect("instance masks are non-empty");
            PatchAnnotation {
                species: cluster.species,
                bbox,
                mask,
            }
        })
        .collect()
}

fn pick_species<R: Rng + ?Sized>(cfg: &GenerationConfig, bank: &ClusterBank, rng: &mut R) -> Result<Species> {
    let weights: Vec<f64> = Species::ALL
        .iter()
        .map(|&s| if bank.of(s).is_empty() { 0.0 } else { cfg.species_weights[s.index()] })
        .collect();
    let dist = WeightedIndex::new(&weights)
        .map_err(|_| Error::Config("no species with positive weight has clusters in the bank".into()))?;
    Ok(Species::ALL[dist.sample(rng)])
}

/// Builds one patch. `seed` is recorded in the provenance only; all draws
/// come from `rng`.
pub fn compose_patch<R: Rng + ?Sized>(
    cfg: &GenerationConfig,
    bank: &ClusterBank,
    dishes: &[EmptyDish],
    rng: &mut R,
    seed: u64,
) -> Result<SyntheticPatch> {
    if dishes.is_empty() || bank.is_empty() {
        return Err(Error::InvalidArgument("cluster and dish banks must be non-empty".into()));
    }
    let size = cfg.patch_size;
    let dish = &dishes[rng.random_range(0..dishes.len())];
    let background = crop_background(dish, rng, size)?;
    let species = pick_species(cfg, bank, rng)?;
    let requested = sample_colony_count(rng, cfg.count_mean);
    let pool = bank.of(species);

    let mut image = background.image;
    let mut canvas = Canvas::new(size);
    let mut annotations = Vec::new();
    let mut rejected = 0usize;
    let budget = FAILURE_BUDGET_FACTOR * cfg.max_place_attempts;
    while annotations.len() < requested && rejected < budget {
        let source = &pool[rng.random_range(0..pool.len())];
        let angle = rng.random_range(0.0..360.0);
        let flip_h = rng.random_bool(0.5);
        let flip_v = rng.random_bool(0.5);
        let mut cluster = source.transformed(angle, flip_h, flip_v);
        if let Some([lo, hi]) = cfg.scale_range {
            let f = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            cluster = cluster.scaled(f);
        }
        if cluster.is_empty() {
            rejected += 1;
            continue;
        }
        let (w, h) = cluster.dims();
        match canvas.try_place(w, h, rng, cfg.max_place_attempts) {
            Some(p) => {
                blend(&mut image, &cluster, p);
                annotations.extend(place_annotations(&cluster, p, size));
            }
            None => rejected += cfg.max_place_attempts,
        }
    }
    Ok(SyntheticPatch {
        image,
        annotations,
        placements: canvas.placed,
        provenance: Provenance {
            dish_id: dish.id,
            background_angle: background.angle_deg,
            species,
            requested,
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::RgbaFragment;
    use crate::seed::rng_for;

    fn gradient_dish(w: usize, h: usize, region: UsableRegion) -> EmptyDish {
        let img = ImageRgb::from_fn(w, h, |x, y| [x as f32 / w as f32, y as f32 / h as f32, 0.5]);
        EmptyDish::new(0, img, region).unwrap()
    }

    fn square_cluster(n: usize, species: Species) -> ColonyCluster {
        let frag = RgbaFragment::new(ImageRgb::filled(n, n, [1.0, 1.0, 1.0]), Mask::ones(n, n)).unwrap();
        ColonyCluster::from_instances(frag, vec![Mask::ones(n, n)], species).unwrap()
    }

    #[test]
    fn colony_count_limit() {
        let mut rng = rng_for(5, &[]);
        let zeros = (0..1000).filter(|_| sample_colony_count(&mut rng, 1e-3) == 0).count();
        assert_eq!(zeros, 1000);
    }

    #[test]
    fn zero_angle_crop_is_plain_copy() {
        let region = UsableRegion::Rect {
            x: 0.0,
            y: 0.0,
            w: 40.0,
            h: 30.0,
        };
        let dish = gradient_dish(40, 30, region);
        let mut rng = rng_for(1, &[]);
        for _ in 0..50 {
            let c = crop_background_at(&dish, 0.0, &mut rng, 16).unwrap();
            let (ox, oy) = c.corners[0];
            assert_eq!((ox.fract(), oy.fract()), (0.0, 0.0));
            assert!(ox + 15.0 <= 39.0 && oy + 15.0 <= 29.0);
            for y in 0..16 {
                for x in 0..16 {
                    assert_eq!(c.image.get(x, y), dish.image.get(ox as usize + x, oy as usize + y));
                }
            }
        }
    }

    #[test]
    fn crop_is_deterministic() {
        let region = UsableRegion::Circle {
            cx: 50.0,
            cy: 50.0,
            r: 45.0,
        };
        let dish = gradient_dish(101, 101, region);
        let a = crop_background(&dish, &mut rng_for(9, &[1]), 32).unwrap();
        let b = crop_background(&dish, &mut rng_for(9, &[1]), 32).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.angle_deg, b.angle_deg);
    }

    #[test]
    fn region_must_fit() {
        let img = ImageRgb::new(10, 10);
        let region = UsableRegion::Rect {
            x: 2.0,
            y: 2.0,
            w: 9.0,
            h: 4.0,
        };
        assert!(EmptyDish::new(0, img, region).is_err());
    }

    #[test]
    fn full_size_fragment_has_one_position() {
        let mut canvas = Canvas::new(20);
        let mut rng = rng_for(2, &[]);
        assert_eq!(
            canvas.try_place(20, 20, &mut rng, 5),
            Some(Placement {
                x: 0,
                y: 0,
                w: 20,
                h: 20
            })
        );
        assert_eq!(canvas.try_place(1, 1, &mut rng, 100), None);
        assert_eq!(Canvas::new(20).try_place(21, 3, &mut rng, 100), None);
    }

    #[test]
    fn placements_never_overlap() {
        let mut canvas = Canvas::new(64);
        let mut rng = rng_for(3, &[]);
        for i in 0..200 {
            canvas.try_place(3 + i % 7, 2 + i % 5, &mut rng, 20);
        }
        let p = &canvas.placed;
        assert!(p.len() > 10);
        for i in 0..p.len() {
            for j in i + 1..p.len() {
                assert!(!p[i].intersects(&p[j]));
            }
        }
    }

    #[test]
    fn blend_endpoints() {
        let mut canvas = ImageRgb::filled(4, 4, [0.2, 0.3, 0.4]);
        let frag = RgbaFragment::new(
            ImageRgb::filled(2, 1, [0.9, 0.8, 0.7]),
            Mask::from_values(2, 1, vec![1.0, 0.0]).unwrap(),
        )
        .unwrap();
        let c = ColonyCluster::from_instances(frag, vec![], Species::SAureus).unwrap();
        blend(&mut canvas, &c, Placement { x: 1, y: 1, w: 2, h: 1 });
        assert_eq!(canvas.get(1, 1), [0.9, 0.8, 0.7]);
        assert_eq!(canvas.get(2, 1), [0.2, 0.3, 0.4]);
    }

    #[test]
    fn patch_annotations_are_tight_and_disjoint() {
        let bank = ClusterBank::new([square_cluster(5, Species::EColi), square_cluster(9, Species::EColi)]);
        let region = UsableRegion::Rect {
            x: 0.0,
            y: 0.0,
            w: 200.0,
            h: 200.0,
        };
        let dishes = vec![gradient_dish(200, 200, region)];
        let cfg = GenerationConfig {
            patch_size: 64,
            ..GenerationConfig::default()
        };
        for i in 0..20 {
            let p = compose_patch(&cfg, &bank, &dishes, &mut rng_for(4, &[i]), i).unwrap();
            assert_eq!(p.image.dims(), (64, 64));
            assert_eq!(p.provenance.species, Species::EColi);
            assert!(p.is_short() || p.annotations.len() >= p.provenance.requested);
            for a in &p.annotations {
                assert_eq!(Some(a.bbox), a.mask.tight_box());
                assert!(a.bbox.within(64.0, 64.0));
            }
            for (i, a) in p.placements.iter().enumerate() {
                for b in &p.placements[i + 1..] {
                    assert!(!a.intersects(b));
                }
            }
        }
    }

    #[test]
    fn zero_count_gives_background_only() {
        let bank = ClusterBank::new([square_cluster(5, Species::EColi)]);
        let region = UsableRegion::Rect {
            x: 0.0,
            y: 0.0,
            w: 100.0,
            h: 100.0,
        };
        let dishes = vec![gradient_dish(100, 100, region)];
        let cfg = GenerationConfig {
            patch_size: 32,
            count_mean: 1e-6,
            ..GenerationConfig::default()
        };
        let p = compose_patch(&cfg, &bank, &dishes, &mut rng_for(0, &[]), 0).unwrap();
        assert!(p.annotations.is_empty());
        assert!(p.placements.is_empty());
    }
}
