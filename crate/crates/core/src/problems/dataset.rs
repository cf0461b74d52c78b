//! Dataset ingestion: IDX image/label files and a synthetic cluster fixture.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{derive_rng, stream};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// A labeled feature matrix. Features live in [0,1] (pixel intensities after
/// rescaling, or clamped synthetic coordinates); labels in [0, n_classes).
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    features: Vec<f64>,
    labels: Vec<usize>,
    n: usize,
    dim: usize,
    n_classes: usize,
}

impl DatasetSplit {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::Input("empty dataset".into()));
        }
        if features.len() != n * dim {
            return Err(Error::Input(format!(
                "feature buffer holds {} values, want n*d = {}*{}",
                features.len(),
                n,
                dim
            )));
        }
        if n_classes == 0 {
            return Err(Error::Input("n_classes must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::Input(format!(
                "label {bad} outside [0, {n_classes})"
            )));
        }
        if let Some(&bad) = features
            .iter()
            .find(|v| !(**v >= 0.0 && **v <= 1.0))
        {
            return Err(Error::Input(format!(
                "feature value {bad} outside [0, 1]"
            )));
        }
        Ok(DatasetSplit {
            features,
            labels,
            n,
            dim,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (&self.features[i * self.dim..(i + 1) * self.dim], self.labels[i])
    }
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::IdxTruncated {
            path: path.to_path_buf(),
            expected: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Reads an IDX image/label file pair, keeping the first `max_n` records.
/// Pixel bytes are rescaled to [0,1] by division by 255.
pub fn load_idx(images_path: &Path, labels_path: &Path, max_n: usize) -> Result<DatasetSplit> {
    let img_bytes = fs::read(images_path)?;
    let lbl_bytes = fs::read(labels_path)?;

    let img_magic = read_be_u32(&img_bytes, 0, images_path)?;
    if img_magic != IDX_IMAGES_MAGIC {
        return Err(Error::IdxMagic {
            path: images_path.to_path_buf(),
            expected: IDX_IMAGES_MAGIC,
            found: img_magic,
        });
    }
    let lbl_magic = read_be_u32(&lbl_bytes, 0, labels_path)?;
    if lbl_magic != IDX_LABELS_MAGIC {
        return Err(Error::IdxMagic {
            path: labels_path.to_path_buf(),
            expected: IDX_LABELS_MAGIC,
            found: lbl_magic,
        });
    }

    let n_images = read_be_u32(&img_bytes, 4, images_path)? as usize;
    let rows = read_be_u32(&img_bytes, 8, images_path)? as usize;
    let cols = read_be_u32(&img_bytes, 12, images_path)? as usize;
    let n_labels = read_be_u32(&lbl_bytes, 4, labels_path)? as usize;

    if n_images != n_labels {
        return Err(Error::IdxShape(format!(
            "{} images vs {} labels",
            n_images, n_labels
        )));
    }
    let dim = rows * cols;
    if dim == 0 {
        return Err(Error::IdxShape(format!("empty image shape {rows}x{cols}")));
    }

    let n = n_images.min(max_n);
    if n == 0 {
        return Err(Error::Input("max_n = 0 keeps no records".into()));
    }

    let img_needed = 16 + n * dim;
    if img_bytes.len() < img_needed {
        return Err(Error::IdxTruncated {
            path: images_path.to_path_buf(),
            expected: img_needed,
            found: img_bytes.len(),
        });
    }
    let lbl_needed = 8 + n;
    if lbl_bytes.len() < lbl_needed {
        return Err(Error::IdxTruncated {
            path: labels_path.to_path_buf(),
            expected: lbl_needed,
            found: lbl_bytes.len(),
        });
    }

    let features: Vec<f64> = img_bytes[16..16 + n * dim]
        .iter()
        .map(|&b| b as f64 / 255.0)
        .collect();
    let labels: Vec<usize> = lbl_bytes[8..8 + n].iter().map(|&b| b as usize).collect();
    let n_classes = labels.iter().copied().max().unwrap() + 1;

    DatasetSplit::new(features, labels, dim, n_classes)
}

/// Deterministic Gaussian class clusters for tests and CI: class k gets a
/// block-structured mean (coordinates j with j % n_classes == k sit high,
/// the rest low) plus seeded jitter, per-sample noise, then a clamp into
/// [0,1]. Labels round-robin so classes stay balanced.
pub fn synth_classification(
    n: usize,
    dim: usize,
    n_classes: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if n_classes == 0 || dim == 0 {
        return Err(Error::Input("dim and n_classes must be positive".into()));
    }
    if n < n_classes {
        return Err(Error::Input(format!(
            "n = {n} must cover all {n_classes} classes"
        )));
    }
    let mut rng = derive_rng(seed, stream::DATA);
    let mut means = vec![0.0f64; n_classes * dim];
    for k in 0..n_classes {
        for j in 0..dim {
            let base = if j % n_classes == k { 0.72 } else { 0.28 };
            means[k * dim + j] = base + rng.gen_range(-0.05..0.05);
        }
    }
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % n_classes;
        labels.push(k);
        for j in 0..dim {
            let noise: f64 = rng.gen_range(-1.0..1.0) + rng.gen_range(-1.0..1.0);
            let v = means[k * dim + j] + 0.06 * noise;
            features.push(v.clamp(0.0, 1.0));
        }
    }
    DatasetSplit::new(features, labels, dim, n_classes)
}
