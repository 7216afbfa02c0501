//! Synthetic chest-film-like images with optional bright lesions.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{write_manifest, BoundingBox, DataError, GrayImage, ManifestEntry, Sample};
use crate::rng::substream;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub n: usize,
    pub seed: u64,
    pub resolution: usize,
}

/// Smooth noise in `[0, 1]`: bilinear value noise over three octaves.
fn value_noise(rng: &mut ChaCha8Rng, r: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; r * r];
    for (cell, amp) in [(r / 2, 0.5f32), (r / 4, 0.3), (r / 8, 0.2)] {
        let cell = cell.max(1);
        let g = r / cell + 2;
        let lattice: Vec<f32> = (0..g * g).map(|_| rng.random::<f32>()).collect();
        for y in 0..r {
            let fy = y as f32 / cell as f32;
            let (iy, ty) = (fy.floor() as usize, fy.fract());
            let sy = ty * ty * (3.0 - 2.0 * ty);
            for x in 0..r {
                let fx = x as f32 / cell as f32;
                let (ix, tx) = (fx.floor() as usize, fx.fract());
                let sx = tx * tx * (3.0 - 2.0 * tx);
                let at = |i: usize, j: usize| lattice[j * g + i];
                let top = at(ix, iy) * (1.0 - sx) + at(ix + 1, iy) * sx;
                let bottom = at(ix, iy + 1) * (1.0 - sx) + at(ix + 1, iy + 1) * sx;
                out[y * r + x] += amp * (top * (1.0 - sy) + bottom * sy);
            }
        }
    }
    out
}

struct Ellipse {
    cx: f32,
    cy: f32,
    a: f32,
    b: f32,
}

impl Ellipse {
    fn rho(&self, x: usize, y: usize) -> f32 {
        let dx = (x as f32 + 0.5 - self.cx) / self.a;
        let dy = (y as f32 + 0.5 - self.cy) / self.b;
        (dx * dx + dy * dy).sqrt()
    }
}

/// Lesion profile: flat core, linear fade from 0.85 to 1.15 radii.
fn lesion_profile(rho: f32) -> f32 {
    ((1.15 - rho) / 0.3).clamp(0.0, 1.0)
}

fn to_gray(values: &[f32], r: usize) -> GrayImage {
    let px = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    GrayImage::new(r, r, px).expect("square raster")
}

fn mean_inside_outside(img: &GrayImage, b: &BoundingBox) -> (f64, f64) {
    let (mut si, mut ni, mut so, mut no) = (0.0, 0usize, 0.0, 0usize);
    for y in 0..img.height() {
        for x in 0..img.width() {
            let v = img.get(x, y) as f64;
            let inside = (x as i64) >= b.x && (x as i64) < b.x + b.w && (y as i64) >= b.y && (y as i64) < b.y + b.h;
            if inside {
                si += v;
                ni += 1;
            } else {
                so += v;
                no += 1;
            }
        }
    }
    (si / ni.max(1) as f64, so / no.max(1) as f64)
}

fn synth_one(seed: u64, index: usize, r: usize, positive: bool) -> (GrayImage, Option<BoundingBox>) {
    let mut rng = substream(seed, &format!("synth/{index}"));
    let rf = r as f32;
    let noise = value_noise(&mut rng, r);
    let brightness = rng.random_range(-0.08f32..0.08);
    let contrast = rng.random_range(0.8f32..1.2);
    let lungs = [
        Ellipse {
            cx: rf * rng.random_range(0.27f32..0.33),
            cy: rf * rng.random_range(0.47f32..0.53),
            a: rf * rng.random_range(0.13f32..0.18),
            b: rf * rng.random_range(0.28f32..0.34),
        },
        Ellipse {
            cx: rf * rng.random_range(0.67f32..0.73),
            cy: rf * rng.random_range(0.47f32..0.53),
            a: rf * rng.random_range(0.13f32..0.18),
            b: rf * rng.random_range(0.28f32..0.34),
        },
    ];
    let grain = Normal::new(0.0f32, 0.03).expect("valid sigma");
    let mut base = vec![0.0f32; r * r];
    for y in 0..r {
        for x in 0..r {
            let mut v = 0.55 + brightness + 0.25 * (noise[y * r + x] - 0.5);
            for lung in &lungs {
                v -= 0.28 * ((1.0 - lung.rho(x, y)) * 4.0).clamp(0.0, 1.0);
            }
            base[y * r + x] = 0.5 + contrast * (v - 0.5) + grain.sample(&mut rng);
        }
    }
    if !positive {
        return (to_gray(&base, r), None);
    }

    let lung = &lungs[rng.random_range(0..2usize)];
    let angle = rng.random_range(0.0f32..std::f32::consts::TAU);
    let dist = rng.random_range(0.0f32..0.6);
    let max_axis = (rf / 8.0).max(4.5);
    let lesion = Ellipse {
        cx: lung.cx + dist * lung.a * angle.cos(),
        cy: lung.cy + dist * lung.b * angle.sin(),
        a: rng.random_range(4.0f32..max_axis),
        b: rng.random_range(4.0f32..max_axis),
    };
    let mut amplitude = rng.random_range(0.25f32..0.45);
    let (mut x0, mut y0, mut x1, mut y1) = (r, r, 0, 0);
    for y in 0..r {
        for x in 0..r {
            if lesion_profile(lesion.rho(x, y)) > 0.0 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    let bbox = BoundingBox { x: x0 as i64, y: y0 as i64, w: (x1 - x0) as i64, h: (y1 - y0) as i64 };
    loop {
        let mut v = base.clone();
        for y in y0..y1 {
            for x in x0..x1 {
                v[y * r + x] += amplitude * lesion_profile(lesion.rho(x, y));
            }
        }
        let img = to_gray(&v, r);
        let (inside, outside) = mean_inside_outside(&img, &bbox);
        if inside > outside || amplitude > 1.0 {
            return (img, Some(bbox));
        }
        amplitude += 0.05;
    }
}

/// In-memory dataset: samples alternate normal / pneumonia, ids
/// `synth_0000`, `synth_0001`, ...
pub fn synthesize(config: &SyntheticConfig) -> Result<Vec<Sample>, DataError> {
    if config.n < 8 {
        return Err(DataError::Config(format!("synthetic dataset needs n >= 8, got {}", config.n)));
    }
    if config.resolution < 32 {
        return Err(DataError::Config(format!("synthetic resolution must be >= 32, got {}", config.resolution)));
    }
    Ok((0..config.n)
        .map(|i| {
            let label = (i % 2) as u8;
            let (image, bbox) = synth_one(config.seed, i, config.resolution, label == 1);
            Sample { id: format!("synth_{i:04}"), image, label, bbox }
        })
        .collect())
}

/// Writes `<out_dir>/images/<id>.png` and `<out_dir>/manifest.csv`.
pub fn generate_synthetic_dataset(config: &SyntheticConfig, out_dir: &Path) -> Result<Vec<Sample>, DataError> {
    let samples = synthesize(config)?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| DataError::Io(format!("{}: {e}", images.display())))?;
    for s in &samples {
        s.image.save(&images.join(format!("{}.png", s.id)))?;
    }
    let entries: Vec<ManifestEntry> =
        samples.iter().map(|s| ManifestEntry { id: s.id.clone(), label: s.label, bbox: s.bbox }).collect();
    write_manifest(&out_dir.join("manifest.csv"), &entries)?;
    Ok(samples)
}
