//! Procedural multi-type defect dataset.
//!
//! Every image shows a textured ellipse on a light background. Anomalous
//! images carry one defect (composites carry two) drawn from four visually
//! distinct families, each with an exact ground-truth mask.

use std::collections::BTreeMap;
use std::f32::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{connected_components, BinaryMask};
use crate::model::InputSize;

use super::codes::DefectCode;
use super::image_io::{save_gray, save_mask};
use super::manifest::{DatasetManifest, SampleRecord, Split, SCHEMA_VERSION};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPOSITES_FILE: &str = "composites.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Side length of the square images.
    pub image_size: usize,
    /// Number of defect types, 1 to 4.
    pub num_types: usize,
    pub normal_count: usize,
    pub per_type_count: usize,
    /// Normal images held out for testing.
    pub test_normal: usize,
    /// Target fraction of anomalous images in the training split.
    pub alpha: f64,
    /// Test images carrying two defect types, written to a separate manifest.
    pub composites: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            image_size: 64,
            num_types: 3,
            normal_count: 400,
            per_type_count: 100,
            test_normal: 100,
            alpha: 0.2,
            composites: 30,
            seed: 0,
        }
    }
}

/// How many images of each kind land in each split.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub train_normal: usize,
    pub test_normal: usize,
    pub train_per_type: Vec<usize>,
    pub test_per_type: Vec<usize>,
}

impl SplitPlan {
    pub fn train_anomalous(&self) -> usize {
        self.train_per_type.iter().sum()
    }

    pub fn achieved_alpha(&self) -> f64 {
        let a = self.train_anomalous();
        a as f64 / (a + self.train_normal) as f64
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=DefectCode::SYNTHETIC.len()).contains(&self.num_types) {
            return Err(Error::Config(format!(
                "num_types must be between 1 and {}, got {}",
                DefectCode::SYNTHETIC.len(),
                self.num_types
            )));
        }
        if self.image_size < 16 {
            return Err(Error::Config(format!(
                "image_size must be at least 16, got {}",
                self.image_size
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        let pairs = self.num_types * (self.num_types - 1) / 2;
        if self.composites > 0 && self.composites < pairs {
            return Err(Error::Config(format!(
                "composites must be 0 or at least {pairs} so every pair of types appears"
            )));
        }
        Ok(())
    }

    pub fn classes(&self) -> Vec<DefectCode> {
        DefectCode::SYNTHETIC[..self.num_types].to_vec()
    }

    /// Training takes `round(α/(1−α) · train_normal)` anomalous images,
    /// spread as evenly as possible over the types; the rest go to test.
    pub fn split_plan(&self) -> Result<SplitPlan> {
        self.validate()?;
        if self.test_normal >= self.normal_count {
            return Err(Error::Config(format!(
                "test_normal ({}) must be smaller than normal_count ({})",
                self.test_normal, self.normal_count
            )));
        }
        let train_normal = self.normal_count - self.test_normal;
        let wanted = (self.alpha / (1.0 - self.alpha) * train_normal as f64).round() as usize;
        let m = self.num_types;
        let train_per_type: Vec<usize> = (0..m)
            .map(|k| wanted / m + usize::from(k < wanted % m))
            .collect();
        if let Some(&t) = train_per_type.first() {
            if t >= self.per_type_count {
                return Err(Error::Config(format!(
                    "alpha {} needs {t} training images per type but only {} exist per type; \
                     at least one per type must remain for testing",
                    self.alpha, self.per_type_count
                )));
            }
        }
        Ok(SplitPlan {
            train_normal,
            test_normal: self.test_normal,
            test_per_type: train_per_type.iter().map(|t| self.per_type_count - t).collect(),
            train_per_type,
        })
    }
}

/// A rendered base object and its geometry.
struct Scene {
    size: usize,
    img: Vec<f32>,
    object: Vec<bool>,
    background: f32,
    cx: f32,
    cy: f32,
    rx: f32,
    ry: f32,
    theta: f32,
}

impl Scene {
    fn render(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let s = size as f32 / 64.0;
        let n = size as f32;
        let background = 0.86 + rng.random_range(-0.02..0.02);
        let cx = n / 2.0 + rng.random_range(-3.0..3.0) * s;
        let cy = n / 2.0 + rng.random_range(-3.0..3.0) * s;
        let rx = rng.random_range(0.31..0.37) * n;
        let ry = rng.random_range(0.25..0.31) * n;
        let theta = rng.random_range(0.0..PI);
        let base = 0.45 + rng.random_range(-0.03..0.03);
        let (fx, fy) = (rng.random_range(1.5..3.5), rng.random_range(1.5..3.5));
        let phase = rng.random_range(0.0..2.0 * PI);
        let mut scene = Scene {
            size,
            img: vec![0.0; size * size],
            object: vec![false; size * size],
            background,
            cx,
            cy,
            rx,
            ry,
            theta,
        };
        for y in 0..size {
            for x in 0..size {
                let p = y * size + x;
                let inside = scene.normalized_radius(x as f32, y as f32) <= 1.0;
                scene.object[p] = inside;
                scene.img[p] = if inside {
                    let t = 2.0 * PI * (fx * x as f32 + fy * y as f32) / n + phase;
                    base + 0.03 * t.sin() + rng.random_range(-0.02..0.02)
                } else {
                    background + rng.random_range(-0.015..0.015)
                };
            }
        }
        scene
    }

    fn normalized_radius(&self, x: f32, y: f32) -> f32 {
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        let u = (dx * c + dy * s) / self.rx;
        let v = (-dx * s + dy * c) / self.ry;
        (u * u + v * v).sqrt()
    }

    /// Point at normalised radius `r` and angle `a` in the object's frame.
    fn polar(&self, r: f32, a: f32) -> (f32, f32) {
        let (u, v) = (r * a.cos() * self.rx, r * a.sin() * self.ry);
        let (c, s) = (self.theta.cos(), self.theta.sin());
        (self.cx + u * c - v * s, self.cy + u * s + v * c)
    }

    fn interior_point(&self, max_r: f32, rng: &mut ChaCha8Rng) -> (f32, f32) {
        let r = max_r * rng.random_range(0.0f32..1.0).sqrt();
        self.polar(r, rng.random_range(0.0..2.0 * PI))
    }

    fn disc(&self, cx: f32, cy: f32, r: f32) -> Vec<bool> {
        let n = self.size;
        (0..n * n)
            .map(|p| {
                let (x, y) = ((p % n) as f32, (p / n) as f32);
                (x - cx).powi(2) + (y - cy).powi(2) <= r * r
            })
            .collect()
    }
}

fn scale(scene: &Scene) -> f32 {
    scene.size as f32 / 64.0
}

/// Samples the footprint of one defect. Painting depends only on the kind
/// and the footprint.
fn sample_mask(kind: DefectCode, scene: &Scene, rng: &mut ChaCha8Rng) -> Vec<bool> {
    let s = scale(scene);
    let n = scene.size;
    match kind {
        DefectCode::Pit => {
            let (x, y) = scene.interior_point(0.7, rng);
            scene.disc(x, y, rng.random_range(2.0..3.0) * s)
        }
        DefectCode::Scratch => {
            let mut mask = vec![false; n * n];
            let (mut x, mut y) = scene.interior_point(0.5, rng);
            let mut dir = rng.random_range(0.0..2.0 * PI);
            for seg in 0..3 {
                if seg > 0 {
                    let turn = rng.random_range(0.3..0.8);
                    dir += if rng.random_bool(0.5) { turn } else { -turn };
                }
                let len = rng.random_range(5.0..8.0) * s;
                let steps = (len * 4.0).ceil() as usize;
                for _ in 0..steps {
                    x += dir.cos() * len / steps as f32;
                    y += dir.sin() * len / steps as f32;
                    let (px, py) = (x.round(), y.round());
                    if px >= 0.0 && py >= 0.0 && (px as usize) < n && (py as usize) < n {
                        mask[py as usize * n + px as usize] = true;
                    }
                }
            }
            // Keep the stroke on the object.
            for (m, &o) in mask.iter_mut().zip(&scene.object) {
                *m &= o;
            }
            mask
        }
        DefectCode::MissingParts => {
            let (x, y) = scene.polar(0.95, rng.random_range(0.0..2.0 * PI));
            let mut mask = scene.disc(x, y, rng.random_range(5.0..7.0) * s);
            for (m, &o) in mask.iter_mut().zip(&scene.object) {
                *m &= o;
            }
            mask
        }
        DefectCode::Contamination => {
            let (x, y) = scene.interior_point(0.55, rng);
            let r0 = rng.random_range(3.0..4.5) * s;
            let mut mask = scene.disc(x, y, r0);
            for _ in 0..2 {
                let a = rng.random_range(0.0..2.0 * PI);
                let d = rng.random_range(0.5..1.0) * r0;
                let lobe = scene.disc(x + d * a.cos(), y + d * a.sin(), rng.random_range(2.5..4.0) * s);
                for (m, l) in mask.iter_mut().zip(lobe) {
                    *m |= l;
                }
            }
            for (m, &o) in mask.iter_mut().zip(&scene.object) {
                *m &= o;
            }
            mask
        }
        other => unreachable!("no renderer for {other}"),
    }
}

fn paint(kind: DefectCode, mask: &[bool], scene: &mut Scene, rng: &mut ChaCha8Rng) {
    for p in 0..mask.len() {
        if !mask[p] {
            continue;
        }
        scene.img[p] = match kind {
            DefectCode::Pit => 0.10 + rng.random_range(-0.02..0.02),
            DefectCode::Scratch => 0.97 + rng.random_range(-0.02..0.02),
            DefectCode::MissingParts => scene.background + rng.random_range(-0.015..0.015),
            DefectCode::Contamination => scene.img[p] + 0.14,
            other => unreachable!("no renderer for {other}"),
        };
    }
}

fn is_single_region(mask: &[bool], size: usize) -> bool {
    let m = BinaryMask {
        height: size,
        width: size,
        data: mask.to_vec(),
    };
    connected_components(&m, 0, 0).len() == 1
}

/// Grows a mask by `r` pixels (Chebyshev distance).
fn dilate(mask: &[bool], size: usize, r: usize) -> Vec<bool> {
    let mut out = vec![false; mask.len()];
    for p in (0..mask.len()).filter(|&p| mask[p]) {
        let (x, y) = (p % size, p / size);
        for yy in y.saturating_sub(r)..=(y + r).min(size - 1) {
            for xx in x.saturating_sub(r)..=(x + r).min(size - 1) {
                out[yy * size + xx] = true;
            }
        }
    }
    out
}

/// Single-component footprint of `kind`, kept clear of `avoid` when given.
fn valid_mask(
    kind: DefectCode,
    scene: &Scene,
    avoid: Option<&[bool]>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<bool>> {
    for _ in 0..1000 {
        let mask = sample_mask(kind, scene, rng);
        let clear = avoid.is_none_or(|a| !mask.iter().zip(a).any(|(&m, &b)| m && b));
        if clear && is_single_region(&mask, scene.size) {
            return Ok(mask);
        }
    }
    Err(Error::Config(format!(
        "could not place a {kind} defect on a {0}x{0} image",
        scene.size
    )))
}

/// One rendered image with its defect masks.
pub struct Rendered {
    pub size: usize,
    pub pixels: Vec<f32>,
    pub masks: Vec<(DefectCode, Vec<bool>)>,
}

/// Renders one image. `kinds` is empty for a normal image. With two kinds
/// the second defect is kept at least a few pixels away from the first.
pub fn render(size: usize, kinds: &[DefectCode], rng: &mut ChaCha8Rng) -> Result<Rendered> {
    let mut scene = Scene::render(size, rng);
    let gap = (6.0 * scale(&scene)).round() as usize;
    let mut masks: Vec<(DefectCode, Vec<bool>)> = Vec::new();
    let mut occupied = vec![false; size * size];
    for &kind in kinds {
        let avoid = (!masks.is_empty()).then_some(occupied.as_slice());
        let mask = valid_mask(kind, &scene, avoid, rng)?;
        for (o, d) in occupied.iter_mut().zip(dilate(&mask, size, gap)) {
            *o |= d;
        }
        masks.push((kind, mask));
    }
    for (kind, mask) in &masks {
        paint(*kind, mask, &mut scene, rng);
    }
    let pixels = scene.img.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    Ok(Rendered { size, pixels, masks })
}

/// Generator for image `index` of a dataset keyed by `seed`.
pub fn image_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

struct Planned {
    stem: String,
    kinds: Vec<DefectCode>,
    split: Split,
    stream: u64,
}

fn write_records(out_dir: &Path, size: usize, plan: &[Planned], seed: u64) -> Result<Vec<SampleRecord>> {
    plan.par_iter()
        .map(|item| {
            let mut rng = image_rng(seed, item.stream);
            let r = render(size, &item.kinds, &mut rng)?;
            let path = PathBuf::from("images").join(format!("{}.png", item.stem));
            save_gray(&out_dir.join(&path), size, size, &r.pixels)?;
            let mut masks = BTreeMap::new();
            for (kind, mask) in &r.masks {
                let mp = PathBuf::from("masks").join(format!("{}_{}.png", item.stem, kind.code()));
                save_mask(&out_dir.join(&mp), size, size, mask)?;
                masks.insert(*kind, mp);
            }
            Ok(SampleRecord {
                path,
                labels: item.kinds.clone(),
                masks,
                split: item.split,
                category: "synthetic".into(),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SyntheticSummary {
    pub manifest_path: PathBuf,
    pub composites_path: Option<PathBuf>,
    pub plan: SplitPlan,
    /// Image counts per class name (`NORMAL` and defect codes) as (train, test).
    pub histogram: BTreeMap<String, (usize, usize)>,
}

impl SyntheticSummary {
    pub fn total_images(&self) -> usize {
        self.histogram.values().map(|(a, b)| a + b).sum()
    }
}

/// Writes the dataset under `out_dir`: `images/`, `masks/`, `manifest.json`
/// and, with composites, `composites.json`.
pub fn generate_synthetic(config: &SyntheticConfig, out_dir: &Path) -> Result<SyntheticSummary> {
    let plan = config.split_plan()?;
    let classes = config.classes();
    let mut items = Vec::new();
    let mut push = |kinds: Vec<DefectCode>, split: Split| {
        let idx = items.len();
        let tag = if kinds.is_empty() {
            "normal".to_string()
        } else {
            kinds[0].code().to_ascii_lowercase()
        };
        let split_tag = if split == Split::Train { "train" } else { "test" };
        items.push(Planned {
            stem: format!("{split_tag}_{tag}_{idx:05}"),
            kinds,
            split,
            stream: idx as u64,
        });
    };
    for _ in 0..plan.train_normal {
        push(vec![], Split::Train);
    }
    for (k, &c) in classes.iter().enumerate() {
        for _ in 0..plan.train_per_type[k] {
            push(vec![c], Split::Train);
        }
    }
    for _ in 0..plan.test_normal {
        push(vec![], Split::Test);
    }
    for (k, &c) in classes.iter().enumerate() {
        for _ in 0..plan.test_per_type[k] {
            push(vec![c], Split::Test);
        }
    }
    let image_size = InputSize {
        height: config.image_size,
        width: config.image_size,
        channels: 1,
    };
    let records = write_records(out_dir, config.image_size, &items, config.seed)?;
    let manifest = DatasetManifest {
        schema_version: SCHEMA_VERSION,
        classes: classes.clone(),
        image_size,
        alpha: plan.achieved_alpha(),
        records,
        root: out_dir.to_path_buf(),
    };
    manifest.validate(true)?;
    let manifest_path = out_dir.join(MANIFEST_FILE);
    manifest.save(&manifest_path)?;

    let mut composites_path = None;
    if config.composites > 0 && classes.len() >= 2 {
        let pairs: Vec<(DefectCode, DefectCode)> = (0..classes.len())
            .flat_map(|a| (a + 1..classes.len()).map(move |b| (a, b)))
            .map(|(a, b)| (classes[a], classes[b]))
            .collect();
        let base = 1u64 << 32;
        let comp_items: Vec<Planned> = (0..config.composites)
            .map(|j| {
                let (a, b) = pairs[j % pairs.len()];
                Planned {
                    stem: format!("composite_{}_{}_{j:05}", a.code().to_ascii_lowercase(), b.code().to_ascii_lowercase()),
                    kinds: vec![a, b],
                    split: Split::Test,
                    stream: base + j as u64,
                }
            })
            .collect();
        let records = write_records(out_dir, config.image_size, &comp_items, config.seed)?;
        let comp = DatasetManifest {
            schema_version: SCHEMA_VERSION,
            classes: classes.clone(),
            image_size,
            alpha: manifest.alpha,
            records,
            root: out_dir.to_path_buf(),
        };
        comp.validate(true)?;
        let path = out_dir.join(COMPOSITES_FILE);
        comp.save(&path)?;
        composites_path = Some(path);
    }

    let mut histogram = BTreeMap::new();
    histogram.insert("NORMAL".to_string(), (plan.train_normal, plan.test_normal));
    for (k, c) in classes.iter().enumerate() {
        histogram.insert(c.code().to_string(), (plan.train_per_type[k], plan.test_per_type[k]));
    }
    Ok(SyntheticSummary {
        manifest_path,
        composites_path,
        plan,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_plan_bookkeeping() {
        let cfg = SyntheticConfig {
            normal_count: 200,
            per_type_count: 30,
            test_normal: 50,
            alpha: 0.1,
            ..Default::default()
        };
        let plan = cfg.split_plan().unwrap();
        // round(0.1 / 0.9 * 150) = 17 anomalous training images.
        assert_eq!(plan.train_per_type, vec![6, 6, 5]);
        assert_eq!(plan.test_per_type, vec![24, 24, 25]);
        assert!((plan.achieved_alpha() - 0.1).abs() < 1.0 / 167.0);
    }

    #[test]
    fn incompatible_alpha_is_config_error() {
        let cfg = SyntheticConfig {
            normal_count: 200,
            per_type_count: 5,
            test_normal: 50,
            alpha: 0.4,
            ..Default::default()
        };
        assert!(matches!(cfg.split_plan(), Err(Error::Config(_))));
    }

    #[test]
    fn every_family_yields_one_region_and_changes_pixels() {
        for (i, kind) in DefectCode::SYNTHETIC.into_iter().enumerate() {
            for j in 0..20 {
                let mut rng = image_rng(7, (i * 100 + j) as u64);
                let r = render(64, &[kind], &mut rng).unwrap();
                let mask = &r.masks[0].1;
                assert!(mask.iter().any(|&m| m));
                assert!(is_single_region(mask, 64));
                let mut rng = image_rng(7, (i * 100 + j) as u64);
                let plain = Scene::render(64, &mut rng);
                let changed = (0..mask.len()).filter(|&p| mask[p] && (plain.img[p] - r.pixels[p]).abs() > 0.05).count();
                assert!(changed * 2 > mask.iter().filter(|&&m| m).count(), "{kind}");
            }
        }
    }

    #[test]
    fn composites_keep_defects_apart() {
        let mut rng = image_rng(3, 1);
        let r = render(64, &[DefectCode::Pit, DefectCode::Scratch], &mut rng).unwrap();
        assert_eq!(r.masks.len(), 2);
        let overlap = r.masks[0].1.iter().zip(&r.masks[1].1).any(|(&a, &b)| a && b);
        assert!(!overlap);
    }

    #[test]
    fn same_seed_same_pixels() {
        let a = render(32, &[DefectCode::Contamination], &mut image_rng(5, 9)).unwrap();
        let b = render(32, &[DefectCode::Contamination], &mut image_rng(5, 9)).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }
}
