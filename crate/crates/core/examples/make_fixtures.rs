//! Writes the small synthetic fixture set used by the integration tests:
//! two annotated dish images, one empty dish, four style images and a config.
//!
//! ```text
//! cargo run -p agarsynth --example make_fixtures -- crates/core/tests/fixtures
//! ```

use std::path::{Path, PathBuf};

use agarsynth::cluster::BBox;
use agarsynth::coco::{write_json_pretty, Annotation, AnnotationFile, ImageEntry, Species};
use agarsynth::compose::UsableRegion;
use agarsynth::dataset::DishEntry;
use agarsynth::imaging::io::write_rgb;
use agarsynth::imaging::ImageRgb;
use agarsynth::seed::rng_for;
use rand::Rng;
use rand_distr::{Distribution, Normal};

const AGAR: [f32; 3] = [0.76, 0.62, 0.36];

struct Colony {
    cx: f64,
    cy: f64,
    r: f64,
}

fn agar(w: usize, h: usize, seed: u64) -> ImageRgb {
    let mut rng = rng_for(seed, &[]);
    let noise = Normal::new(0.0, 0.008).unwrap();
    let (mx, my) = (w as f64 / 2.0, h as f64 / 2.0);
    ImageRgb::from_fn(w, h, |x, y| {
        let d = ((x as f64 - mx).powi(2) + (y as f64 - my).powi(2)).sqrt() / mx.max(my);
        let shade = 1.0 - 0.06 * d * d;
        let n = noise.sample(&mut rng) as f32;
        AGAR.map(|c| (c * shade as f32 + n).clamp(0.0, 1.0))
    })
}

fn paint_colony(img: &mut ImageRgb, c: &Colony, color: [f32; 3]) {
    let x0 = (c.cx - c.r - 2.0).floor().max(0.0) as usize;
    let y0 = (c.cy - c.r - 2.0).floor().max(0.0) as usize;
    let x1 = ((c.cx + c.r + 2.0).ceil() as usize).min(img.width() - 1);
    let y1 = ((c.cy + c.r + 2.0).ceil() as usize).min(img.height() - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = ((x as f64 + 0.5 - c.cx).powi(2) + (y as f64 + 0.5 - c.cy).powi(2)).sqrt();
            let a = (c.r + 0.5 - d).clamp(0.0, 1.0) as f32;
            if a == 0.0 {
                continue;
            }
            let glow = 1.0 + 0.05 * (1.0 - (d / c.r).min(1.0)) as f32;
            let p = img.get(x, y);
            img.set(x, y, std::array::from_fn(|k| (a * (color[k] * glow).min(1.0) + (1.0 - a) * p[k]).clamp(0.0, 1.0)));
        }
    }
}

fn colony_box(c: &Colony) -> BBox {
    let x0 = (c.cx - c.r).floor();
    let y0 = (c.cy - c.r).floor();
    BBox::new(x0, y0, (c.cx + c.r).ceil() - x0, (c.cy + c.r).ceil() - y0)
}

fn annotated_image(
    file: &mut AnnotationFile,
    dir: &Path,
    id: u64,
    seed: u64,
    species: Species,
    color: [f32; 3],
    colonies: &[Colony],
    specks: &[(usize, usize, usize)],
) {
    let mut img = agar(512, 512, seed);
    for c in colonies {
        paint_colony(&mut img, c, color);
    }
    for &(sx, sy, r) in specks {
        for y in sy - r..=sy + r {
            for x in sx - r..=sx + r {
                if (x as f64 - sx as f64).powi(2) + (y as f64 - sy as f64).powi(2) <= (r * r) as f64 {
                    img.set(x, y, [0.07, 0.07, 0.09]);
                }
            }
        }
    }
    let name = format!("dish_{id:02}.png");
    write_rgb(&dir.join("images").join(&name), &img).unwrap();
    file.images.push(ImageEntry {
        id,
        file_name: name,
        width: 512,
        height: 512,
        dish_id: None,
        seed: None,
    });
    for c in colonies {
        let bbox = colony_box(c);
        file.annotations.push(Annotation {
            id: file.annotations.len() as u64 + 1,
            image_id: id,
            category_id: species.id(),
            area: bbox.area(),
            bbox,
            segmentation: None,
            iscrowd: 0,
        });
    }
}

fn c(cx: f64, cy: f64, r: f64) -> Colony {
    Colony { cx, cy, r }
}

fn main() {
    let dir: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("crates/core/tests/fixtures"));
    std::fs::create_dir_all(dir.join("images")).unwrap();
    std::fs::create_dir_all(dir.join("styles")).unwrap();

    let mut file = AnnotationFile::with_species_categories();
    annotated_image(
        &mut file,
        &dir,
        1,
        11,
        Species::EColi,
        [0.93, 0.88, 0.74],
        &[
            c(80.0, 90.0, 14.0),
            c(200.0, 70.0, 9.0),
            // overlapping pair
            c(320.0, 150.0, 16.0),
            c(342.0, 162.0, 12.0),
            // chain of three
            c(120.0, 300.0, 11.0),
            c(138.0, 310.0, 10.0),
            c(156.0, 322.0, 9.0),
            c(420.0, 400.0, 20.0),
            c(260.0, 430.0, 7.0),
        ],
        &[(450, 60, 4)],
    );
    annotated_image(
        &mut file,
        &dir,
        2,
        12,
        Species::SAureus,
        [0.97, 0.90, 0.62],
        &[
            c(100.0, 100.0, 12.0),
            c(250.0, 120.0, 18.0),
            c(268.0, 136.0, 9.0),
            c(400.0, 220.0, 15.0),
            c(150.0, 380.0, 10.0),
            c(330.0, 400.0, 13.0),
            c(60.0, 250.0, 8.0),
        ],
        // one speck on agar, one inside the box of the colony at (400, 220)
        &[(200, 260, 3), (411, 208, 2)],
    );
    write_json_pretty(&dir.join("annotations.json"), &file).unwrap();

    let mut dish = agar(1024, 1024, 21);
    let mut rng = rng_for(22, &[]);
    // faint scratches so crops are distinguishable
    for _ in 0..40 {
        let (x, y) = (rng.random_range(0..1024), rng.random_range(0..1024));
        let len = rng.random_range(5..30);
        for k in 0..len {
            if x + k < 1024 {
                let p = dish.get(x + k, y);
                dish.set(x + k, y, p.map(|v| v * 0.96));
            }
        }
    }
    write_rgb(&dir.join("images").join("empty_00.png"), &dish).unwrap();
    let dishes = vec![DishEntry {
        file: "images/empty_00.png".into(),
        region: UsableRegion::Rect {
            x: 100.0,
            y: 100.0,
            w: 824.0,
            h: 824.0,
        },
    }];
    write_json_pretty(&dir.join("dishes.json"), &dishes).unwrap();

    let tints = [[0.55, 0.45, 0.30], [0.80, 0.72, 0.55], [0.62, 0.55, 0.48], [0.85, 0.60, 0.35]];
    for (i, t) in tints.iter().enumerate() {
        let img = ImageRgb::from_fn(64, 64, |x, y| {
            let v = ((x * 7 + y * 13) % 17) as f32 / 17.0 * 0.08;
            t.map(|c| (c + v).clamp(0.0, 1.0))
        });
        write_rgb(&dir.join("styles").join(format!("style_{i:02}.png")), &img).unwrap();
    }
}
