//! RGB-D sample loading, preprocessing, box prompts and synthetic scenes.
//!
//! Datasets live in `root/{Image,Depth,GT}/<id>.{png,jpg}`. Boxes use
//! half-open pixel intervals: `x` is the column, `y` the row, and a box covers
//! `[x_min, x_max) × [y_min, y_max)`.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::kernels;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Coarsest encoder stride; preprocessed sizes must be a multiple of it.
pub const SIZE_STRIDE: usize = 8;
pub const MIN_SIZE: usize = 16;

/// Per-channel RGB standardisation constants (ImageNet statistics on a [0,1] scale).
pub const PIXEL_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const PIXEL_STD: [f64; 3] = [0.229, 0.224, 0.225];

const IMAGE_DIR: &str = "Image";
const DEPTH_DIR: &str = "Depth";
const GT_DIR: &str = "GT";
const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxPrompt {
    pub x_min: usize,
    pub y_min: usize,
    pub x_max: usize,
    pub y_max: usize,
}

impl BoxPrompt {
    pub fn new(x_min: usize, y_min: usize, x_max: usize, y_max: usize) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        if self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(Error::BadBox(format!("{self:?} is empty or has swapped corners")));
        }
        if self.x_max > width || self.y_max > height {
            return Err(Error::BadBox(format!("{self:?} exceeds {width}x{height}")));
        }
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..self.x_max).contains(&x) && (self.y_min..self.y_max).contains(&y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[3, H, W]`, in [0,1] until preprocessed.
    pub image: Tensor,
    /// `[1, H, W]` in [0,1].
    pub depth: Tensor,
    /// `[1, H, W]`, exactly {0,1}.
    pub gt_mask: Tensor,
    pub bbox: BoxPrompt,
    pub id: String,
}

impl Sample {
    pub fn size(&self) -> (usize, usize) {
        (self.image.shape()[1], self.image.shape()[2])
    }

    pub fn validate(&self) -> Result<()> {
        let (_, h, w) = self.image.dims3()?;
        if self.image.shape()[0] != 3
            || self.depth.shape() != [1, h, w]
            || self.gt_mask.shape() != [1, h, w]
        {
            return Err(Error::shape(format!(
                "sample `{}`: image {:?}, depth {:?}, gt {:?}",
                self.id,
                self.image.shape(),
                self.depth.shape(),
                self.gt_mask.shape()
            )));
        }
        if let Some(&v) = self.gt_mask.data().iter().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::BadMask(v));
        }
        self.bbox.validate(w, h)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub root: PathBuf,
    pub split: Split,
}

impl DatasetSpec {
    pub fn new(root: impl Into<PathBuf>, split: Split) -> Self {
        Self { root: root.into(), split }
    }

    fn stems(&self, dir: &str) -> Result<BTreeSet<String>> {
        let path = self.root.join(dir);
        let entries = fs::read_dir(&path).map_err(|e| Error::io(&path, e))?;
        let mut stems = BTreeSet::new();
        for entry in entries {
            let p = entry.map_err(|e| Error::io(&path, e))?.path();
            let ext = p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
            if ext.is_some_and(|e| EXTENSIONS.contains(&e.as_str())) {
                if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                    stems.insert(stem.to_string());
                }
            }
        }
        Ok(stems)
    }

    /// Sorted sample ids; every file must have counterparts in the other two folders.
    pub fn ids(&self) -> Result<Vec<String>> {
        let image = self.stems(IMAGE_DIR)?;
        let depth = self.stems(DEPTH_DIR)?;
        let gt = self.stems(GT_DIR)?;
        for (set, others) in [(&image, [(&depth, DEPTH_DIR), (&gt, GT_DIR)]), (&depth, [(&image, IMAGE_DIR), (&gt, GT_DIR)])] {
            for id in set {
                for (other, dir) in others {
                    if !other.contains(id) {
                        return Err(Error::MissingPair { id: id.clone(), dir: dir.to_string() });
                    }
                }
            }
        }
        if let Some(id) = gt.iter().find(|id| !image.contains(*id)) {
            return Err(Error::MissingPair { id: id.clone(), dir: IMAGE_DIR.to_string() });
        }
        Ok(image.into_iter().collect())
    }

    fn file(&self, dir: &str, id: &str) -> Result<PathBuf> {
        EXTENSIONS
            .iter()
            .map(|ext| self.root.join(dir).join(format!("{id}.{ext}")))
            .find(|p| p.is_file())
            .ok_or_else(|| Error::MissingPair { id: id.to_string(), dir: dir.to_string() })
    }

    pub fn load_all(&self) -> Result<Vec<Sample>> {
        self.ids()?.iter().map(|id| load_sample(self, id)).collect()
    }
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

fn luma_tensor(img: &GrayImage) -> Tensor {
    let (w, h) = img.dimensions();
    Tensor::new(vec![1, h as usize, w as usize], img.as_raw().iter().map(|&v| v as f64 / 255.0).collect()).unwrap()
}

/// Loads one triplet, scales to [0,1], binarises GT at 0.5 and derives the tight box.
pub fn load_sample(spec: &DatasetSpec, id: &str) -> Result<Sample> {
    let rgb = open(&spec.file(IMAGE_DIR, id)?)?.to_rgb8();
    let depth = open(&spec.file(DEPTH_DIR, id)?)?.to_luma8();
    let gt = open(&spec.file(GT_DIR, id)?)?.to_luma8();
    let (w, h) = rgb.dimensions();
    if depth.dimensions() != (w, h) || gt.dimensions() != (w, h) {
        return Err(Error::shape(format!("sample `{id}`: image, depth and GT sizes differ")));
    }
    let (w, h) = (w as usize, h as usize);
    let mut image = Tensor::zeros(&[3, h, w]);
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            image.data_mut()[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    let gt_mask = luma_tensor(&gt).map(|v| if v > 0.5 { 1.0 } else { 0.0 });
    let bbox = derive_box_prompt(&gt_mask, 0.0, None)?;
    Ok(Sample { image, depth: luma_tensor(&depth), gt_mask, bbox, id: id.to_string() })
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a sample in the dataset layout as 8-bit PNGs.
pub fn save_sample(root: &Path, s: &Sample) -> Result<()> {
    let (h, w) = s.size();
    for dir in [IMAGE_DIR, DEPTH_DIR, GT_DIR] {
        let p = root.join(dir);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let plane = h * w;
    let rgb: RgbImage = ImageBuffer::from_fn(w as u32, h as u32, |x, y| {
        let i = y as usize * w + x as usize;
        let d = s.image.data();
        Rgb([to_u8(d[i]), to_u8(d[plane + i]), to_u8(d[2 * plane + i])])
    });
    let gray = |t: &Tensor| -> GrayImage {
        ImageBuffer::from_fn(w as u32, h as u32, |x, y| Luma([to_u8(t.data()[y as usize * w + x as usize])]))
    };
    let save = |img: &dyn Fn(&Path) -> image::ImageResult<()>, dir: &str| -> Result<()> {
        let path = root.join(dir).join(format!("{}.png", s.id));
        img(&path).map_err(|source| Error::Image { path, source })
    };
    save(&|p| rgb.save(p), IMAGE_DIR)?;
    save(&|p| gray(&s.depth).save(p), DEPTH_DIR)?;
    save(&|p| gray(&s.gt_mask).save(p), GT_DIR)?;
    Ok(())
}

pub fn save_dataset(root: &Path, samples: &[Sample]) -> Result<()> {
    samples.iter().try_for_each(|s| save_sample(root, s))
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = p / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn check_size(size: usize) -> Result<()> {
    if size < MIN_SIZE || size % SIZE_STRIDE != 0 {
        return Err(Error::BadSize { size, stride: SIZE_STRIDE });
    }
    Ok(())
}

/// Resizes to `size × size`, clips image channels to their [p1, p99] range and
/// standardises them; GT uses nearest neighbour, the box scales proportionally.
pub fn preprocess(s: &Sample, size: usize) -> Result<Sample> {
    check_size(size)?;
    s.validate()?;
    let (h, w) = s.size();
    let image = kernels::resize_bilinear(s.image.data(), 3, h, w, size, size);
    let plane = size * size;
    let mut out = Vec::with_capacity(3 * plane);
    for (c, chan) in image.chunks(plane).enumerate() {
        let (lo, hi) = (percentile(chan, 1.0), percentile(chan, 99.0));
        out.extend(chan.iter().map(|v| (v.clamp(lo, hi) - PIXEL_MEAN[c]) / PIXEL_STD[c]));
    }
    let depth = kernels::resize_bilinear(s.depth.data(), 1, h, w, size, size);
    let gt = kernels::resize_nearest(s.gt_mask.data(), 1, h, w, size, size);
    let scale = |v: usize, n: usize, ceil: bool| {
        let x = (v * size) as f64 / n as f64;
        (if ceil { x.ceil() } else { x.floor() }) as usize
    };
    let b = s.bbox;
    let bbox = BoxPrompt::new(
        scale(b.x_min, w, false),
        scale(b.y_min, h, false),
        scale(b.x_max, w, true).max(scale(b.x_min, w, false) + 1).min(size),
        scale(b.y_max, h, true).max(scale(b.y_min, h, false) + 1).min(size),
    );
    Ok(Sample {
        image: Tensor::new(vec![3, size, size], out)?,
        depth: Tensor::new(vec![1, size, size], depth)?,
        gt_mask: Tensor::new(vec![1, size, size], gt.into_iter().map(|v| if v > 0.5 { 1.0 } else { 0.0 }).collect())?,
        bbox,
        id: s.id.clone(),
    })
}

/// Tight bounding box of the foreground, each side optionally jittered by up
/// to `jitter × side length` (rounded), clamped to the map and kept non-empty.
pub fn derive_box_prompt(gt: &Tensor, jitter: f64, rng: Option<&mut ChaCha8Rng>) -> Result<BoxPrompt> {
    let (_, h, w) = gt.dims3()?;
    let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..h {
        for x in 0..w {
            if gt.data()[y * w + x] > 0.5 {
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x + 1);
                y1 = y1.max(y + 1);
            }
        }
    }
    if x1 == 0 {
        return Err(Error::EmptyMask);
    }
    let tight = BoxPrompt::new(x0, y0, x1, y1);
    let Some(rng) = rng.filter(|_| jitter > 0.0) else { return Ok(tight) };
    let mut shift = |v: usize, side: usize, limit: usize| {
        let d = jitter * side as f64;
        let delta = rng.random_range(-d..=d).round() as i64;
        (v as i64 + delta).clamp(0, limit as i64) as usize
    };
    let (bw, bh) = (tight.width(), tight.height());
    let mut b = BoxPrompt::new(shift(x0, bw, w - 1), shift(y0, bh, h - 1), shift(x1, bw, w), shift(y1, bh, h));
    if b.x_min >= b.x_max {
        (b.x_min, b.x_max) = (x0, x1);
    }
    if b.y_min >= b.y_max {
        (b.y_min, b.y_max) = (y0, y1);
    }
    Ok(b)
}

/// Deterministic synthetic camouflage scenes: a textured background, one
/// low-contrast blob, and a depth map that separates the blob clearly.
pub fn synth_dataset(n: usize, seed: u64, size: usize) -> Vec<Sample> {
    (0..n).map(|i| synth_scene(seed, i, size)).collect()
}

fn synth_scene(seed: u64, index: usize, size: usize) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let s = size as f64;
    let tau = std::f64::consts::TAU;

    // blob: a star-shaped region with a smoothly perturbed radius
    let cx = rng.random_range(0.35..0.65) * s;
    let cy = rng.random_range(0.35..0.65) * s;
    let r0 = rng.random_range(0.16..0.26) * s;
    let harmonics: Vec<(f64, f64, f64)> =
        (2..5).map(|k| (k as f64, rng.random_range(0.0..0.12), rng.random_range(0.0..tau))).collect();
    let inside = |x: f64, y: f64| {
        let (dx, dy) = (x + 0.5 - cx, y + 0.5 - cy);
        let theta = dy.atan2(dx);
        let r = r0 * (1.0 + harmonics.iter().map(|(k, a, p)| a * (k * theta + p).sin()).sum::<f64>());
        (dx * dx + dy * dy).sqrt() <= r
    };

    let base: Vec<f64> = (0..3).map(|_| rng.random_range(0.3..0.7)).collect();
    let tint: Vec<f64> = (0..3).map(|_| rng.random_range(-0.05..0.05)).collect();
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.15..0.5), rng.random_range(0.0..tau), rng.random_range(0.0..tau)))
        .collect();
    let texture = |x: f64, y: f64, phase: f64| {
        waves.iter().map(|(f, a, p)| (f * (x * a.cos() + y * a.sin()) + p + phase).sin()).sum::<f64>() / 3.0
    };
    let fg_phase = rng.random_range(0.0..tau);
    let pixel_noise = Normal::new(0.0, 0.02).unwrap();
    let depth_noise = Normal::new(0.0, 0.05).unwrap();
    let depth_fg = rng.random_range(0.25..0.35);
    let ramp_dir = rng.random_bool(0.5);

    let plane = size * size;
    let mut image = vec![0.0; 3 * plane];
    let mut depth = vec![0.0; plane];
    let mut gt = vec![0.0; plane];
    for y in 0..size {
        for x in 0..size {
            let i = y * size + x;
            let (fx, fy) = (x as f64, y as f64);
            let fg = inside(fx, fy);
            let t = if fg { texture(fx, fy, fg_phase) } else { texture(fx, fy, 0.0) };
            for c in 0..3 {
                let tinted = base[c] + if fg { tint[c] } else { 0.0 };
                image[c * plane + i] = (tinted + 0.12 * t + pixel_noise.sample(&mut rng)).clamp(0.0, 1.0);
            }
            let along = if ramp_dir { fy } else { fx } / (s - 1.0).max(1.0);
            let d = if fg { depth_fg } else { 0.65 + 0.2 * along };
            depth[i] = (d + depth_noise.sample(&mut rng)).clamp(0.0, 1.0);
            gt[i] = if fg { 1.0 } else { 0.0 };
        }
    }
    let gt_mask = Tensor::new(vec![1, size, size], gt).unwrap();
    let bbox = derive_box_prompt(&gt_mask, 0.0, None).expect("blob is never empty");
    Sample {
        image: Tensor::new(vec![3, size, size], image).unwrap(),
        depth: Tensor::new(vec![1, size, size], depth).unwrap(),
        gt_mask,
        bbox,
        id: format!("synth_{index:04}"),
    }
}

/// Mean absolute foreground/background difference of per-channel RGB means (max over channels).
pub fn rgb_contrast(s: &Sample) -> f64 {
    let plane = s.gt_mask.len();
    (0..3)
        .map(|c| {
            let chan = &s.image.data()[c * plane..(c + 1) * plane];
            (masked_mean(chan, s.gt_mask.data(), true) - masked_mean(chan, s.gt_mask.data(), false)).abs()
        })
        .fold(0.0, f64::max)
}

/// `|mean depth(fg) − mean depth(bg)|`.
pub fn depth_disparity(s: &Sample) -> f64 {
    (masked_mean(s.depth.data(), s.gt_mask.data(), true) - masked_mean(s.depth.data(), s.gt_mask.data(), false)).abs()
}

fn masked_mean(values: &[f64], mask: &[f64], fg: bool) -> f64 {
    let (sum, n) = values
        .iter()
        .zip(mask)
        .filter(|(_, &m)| (m == 1.0) == fg)
        .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
    sum / n.max(1) as f64
}
