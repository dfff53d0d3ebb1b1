//! Dataset loading: IDX image/label files, CIFAR-10 binary batches, and a
//! deterministic synthetic set for runs without downloaded data.
//!
//! IDX files are validated by their magic numbers (2051 for images, 2049
//! for labels) and by length; CIFAR-10 batches by their fixed 3073-byte
//! record structure and label range.

use crate::error::{Result, TacError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fs;
use std::io::Write;
use std::path::Path;

pub const IDX_IMAGE_MAGIC: u32 = 2051;
pub const IDX_LABEL_MAGIC: u32 = 2049;
const CIFAR_RECORD: usize = 3073;

/// In-memory classification dataset, images in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub images: Vec<f64>,
    pub labels: Vec<u8>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let len = self.image_len();
        &self.images[i * len..(i + 1) * len]
    }

    /// Deterministic prefix subset.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images[..n * self.image_len()].to_vec(),
            labels: self.labels[..n].to_vec(),
            ..*self
        }
    }
}

fn read_be_u32(bytes: &[u8], pos: usize, what: &str) -> Result<u32> {
    bytes
        .get(pos..pos + 4)
        .map(|s| u32::from_be_bytes(s.try_into().unwrap()))
        .ok_or_else(|| TacError::CorruptData(format!("truncated {what}")))
}

/// Parses an IDX3 image file into raw bytes plus dimensions.
pub fn read_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize, usize)> {
    let bytes = fs::read(path)?;
    let magic = read_be_u32(&bytes, 0, "image header")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(TacError::CorruptData(format!(
            "bad image magic {magic} in {} (want {IDX_IMAGE_MAGIC})",
            path.display()
        )));
    }
    let n = read_be_u32(&bytes, 4, "image count")? as usize;
    let h = read_be_u32(&bytes, 8, "image rows")? as usize;
    let w = read_be_u32(&bytes, 12, "image cols")? as usize;
    let expect = 16 + n * h * w;
    if bytes.len() != expect {
        return Err(TacError::CorruptData(format!(
            "image payload is {} bytes, header implies {expect}",
            bytes.len()
        )));
    }
    Ok((bytes[16..].to_vec(), n, h, w))
}

/// Parses an IDX1 label file.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    let magic = read_be_u32(&bytes, 0, "label header")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(TacError::CorruptData(format!(
            "bad label magic {magic} in {} (want {IDX_LABEL_MAGIC})",
            path.display()
        )));
    }
    let n = read_be_u32(&bytes, 4, "label count")? as usize;
    if bytes.len() != 8 + n {
        return Err(TacError::CorruptData(format!(
            "label payload is {} bytes, header implies {}",
            bytes.len(),
            8 + n
        )));
    }
    Ok(bytes[8..].to_vec())
}

/// Loads a paired IDX image/label set as a grayscale dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let (raw, n, h, w) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(TacError::CorruptData(format!(
            "{n} images but {} labels",
            labels.len()
        )));
    }
    let num_classes = labels.iter().copied().max().unwrap_or(0) as usize + 1;
    Ok(Dataset {
        images: raw.iter().map(|&b| b as f64 / 255.0).collect(),
        labels,
        channels: 1,
        height: h,
        width: w,
        num_classes: num_classes.max(10),
    })
}

pub fn write_idx_images(path: &Path, pixels: &[u8], n: usize, h: usize, w: usize) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&IDX_IMAGE_MAGIC.to_be_bytes())?;
    f.write_all(&(n as u32).to_be_bytes())?;
    f.write_all(&(h as u32).to_be_bytes())?;
    f.write_all(&(w as u32).to_be_bytes())?;
    f.write_all(pixels)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&IDX_LABEL_MAGIC.to_be_bytes())?;
    f.write_all(&(labels.len() as u32).to_be_bytes())?;
    f.write_all(labels)?;
    Ok(())
}

/// Loads CIFAR-10 binary batch files (3073-byte records: label + 3x32x32).
pub fn load_cifar10(paths: &[&Path]) -> Result<Dataset> {
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = fs::read(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
            return Err(TacError::CorruptData(format!(
                "{}: {} bytes is not a whole number of 3073-byte records",
                path.display(),
                bytes.len()
            )));
        }
        for rec in bytes.chunks_exact(CIFAR_RECORD) {
            if rec[0] > 9 {
                return Err(TacError::CorruptData(format!(
                    "{}: label {} out of range",
                    path.display(),
                    rec[0]
                )));
            }
            labels.push(rec[0]);
            images.extend(rec[1..].iter().map(|&b| b as f64 / 255.0));
        }
    }
    Ok(Dataset {
        images,
        labels,
        channels: 3,
        height: 32,
        width: 32,
        num_classes: 10,
    })
}

/// Deterministic 10-class 28x28 synthetic dataset. The class templates are
/// fixed (every split sees the same ten patterns); `seed` only drives the
/// per-sample shifts and pixel noise, so differently seeded splits come
/// from one task.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let (h, w) = (28usize, 28usize);
    let classes = 10usize;

    let mut template_rng = ChaCha8Rng::seed_from_u64(0x7461632d64617461);
    let mut templates = Vec::with_capacity(classes);
    for _ in 0..classes {
        let fy = template_rng.gen_range(0.25..1.2);
        let fx = template_rng.gen_range(0.25..1.2);
        let py = template_rng.gen_range(0.0..std::f64::consts::TAU);
        let px = template_rng.gen_range(0.0..std::f64::consts::TAU);
        let mut t = vec![0.0f64; h * w];
        for y in 0..h {
            for x in 0..w {
                let v = (fy * y as f64 + py).sin() + (fx * x as f64 + px).cos();
                t[y * w + x] = if v > 0.0 { 0.9 } else { 0.1 };
            }
        }
        templates.push(t);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        let dy = rng.gen_range(-2i64..=2);
        let dx = rng.gen_range(-2i64..=2);
        for y in 0..h {
            for x in 0..w {
                let sy = (y as i64 + dy).rem_euclid(h as i64) as usize;
                let sx = (x as i64 + dx).rem_euclid(w as i64) as usize;
                let noise = rng.gen_range(-0.15..0.15);
                images.push((templates[class][sy * w + sx] + noise).clamp(0.0, 1.0));
            }
        }
        labels.push(class as u8);
    }
    Dataset {
        images,
        labels,
        channels: 1,
        height: h,
        width: w,
        num_classes: classes,
    }
}

/// Two linearly separable classes on 8x8 single-channel images: class 0
/// lights the left half, class 1 the right half, plus noise.
pub fn toy_two_class(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (8usize, 8usize);
    let mut images = Vec::with_capacity(n * h * w);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        for _y in 0..h {
            for x in 0..w {
                let lit = if class == 0 { x < w / 2 } else { x >= w / 2 };
                let base: f64 = if lit { 0.85 } else { 0.15 };
                images.push((base + rng.gen_range(-0.1..0.1)).clamp(0.0, 1.0));
            }
        }
        labels.push(class);
    }
    Dataset {
        images,
        labels,
        channels: 1,
        height: h,
        width: w,
        num_classes: 2,
    }
}
