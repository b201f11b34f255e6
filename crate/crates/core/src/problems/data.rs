//! Classification datasets: in-memory construction, Gaussian blobs, and the
//! IDX binary format used by the MNIST family.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{subseed, SplitMix64};

/// Labeled feature matrix, row-major `n x dim`, labels in `0..num_classes`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if dim == 0 || num_classes == 0 {
            return Err(Error::Domain(
                "dataset needs dim >= 1 and classes >= 1".into(),
            ));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::Domain(format!(
                "feature buffer holds {} values, expected {} x {}",
                features.len(),
                labels.len(),
                dim
            )));
        }
        if let Some((index, _)) = features.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite feature value at flat index {index}"
            )));
        }
        for (index, label) in labels.iter().enumerate() {
            if *label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    index,
                    label: *label,
                    classes: num_classes,
                });
            }
        }
        Ok(Dataset {
            n: labels.len(),
            dim,
            features,
            labels,
            num_classes,
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

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    /// Keeps the first `limit` samples (useful for smoke runs on large files).
    pub fn truncated(mut self, limit: usize) -> Self {
        if limit < self.n {
            self.n = limit;
            self.features.truncate(limit * self.dim);
            self.labels.truncate(limit);
        }
        self
    }
}

/// Isotropic Gaussian clusters, one per class, centers drawn uniformly from
/// `(-3, 3)^dim`. Samples are laid out class-major: all of class 0, then
/// class 1, and so on — shuffling is the trainer's job. Draw order (centers
/// first, then points, both class-major and coordinate-minor) is fixed, so a
/// seed pins the dataset bit for bit.
pub fn make_blobs(
    seed: u64,
    per_class: usize,
    classes: usize,
    dim: usize,
    spread: f64,
) -> Result<Dataset> {
    if per_class == 0 || classes < 2 || dim == 0 {
        return Err(Error::Domain(
            "blobs need per_class >= 1, classes >= 2, dim >= 1".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::Domain(format!(
            "blob spread must be nonnegative, got {spread}"
        )));
    }
    let mut center_rng = SplitMix64::new(subseed(seed, "blobs.centers", 0));
    let centers: Vec<f64> = (0..classes * dim)
        .map(|_| center_rng.next_in(-3.0, 3.0))
        .collect();

    let mut point_rng = SplitMix64::new(subseed(seed, "blobs.points", 0));
    let mut features = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for c in 0..classes {
        for _ in 0..per_class {
            for j in 0..dim {
                features.push(centers[c * dim + j] + spread * point_rng.next_gaussian());
            }
            labels.push(c);
        }
    }
    Dataset::new(features, labels, dim, classes)
}

const IDX_MAGIC_LABELS: u32 = 0x0000_0801;
const IDX_MAGIC_IMAGES: u32 = 0x0000_0803;

fn read_be_u32(bytes: &[u8], offset: usize, path: &str) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(Error::IdxParse {
            path: path.into(),
            offset,
            msg: format!("unexpected end of file (size {})", bytes.len()),
        }),
    }
}

/// Parses an IDX image file (magic `0x00000803`): big-endian header
/// `[magic, n, rows, cols]` followed by `n*rows*cols` unsigned bytes.
/// Returns `(n, rows*cols, pixels)` with pixels scaled to `[0, 1]` as
/// `byte / 255`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<f64>)> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let magic = read_be_u32(&bytes, 0, &path_str)?;
    if magic != IDX_MAGIC_IMAGES {
        return Err(Error::IdxParse {
            path: path_str,
            offset: 0,
            msg: format!("bad magic {magic:#010x}, expected {IDX_MAGIC_IMAGES:#010x}"),
        });
    }
    let n = read_be_u32(&bytes, 4, &path_str)? as usize;
    let rows = read_be_u32(&bytes, 8, &path_str)? as usize;
    let cols = read_be_u32(&bytes, 12, &path_str)? as usize;
    let pixels_per = rows.checked_mul(cols).ok_or_else(|| Error::IdxParse {
        path: path_str.clone(),
        offset: 8,
        msg: format!("dimension product {rows} x {cols} overflows"),
    })?;
    let total = n.checked_mul(pixels_per).ok_or_else(|| Error::IdxParse {
        path: path_str.clone(),
        offset: 4,
        msg: format!("dimension product {n} x {rows} x {cols} overflows"),
    })?;
    let data = &bytes[16..];
    if data.len() != total {
        return Err(Error::IdxParse {
            path: path_str,
            offset: 16,
            msg: format!("expected {total} pixel bytes, found {}", data.len()),
        });
    }
    let pixels = data.iter().map(|b| *b as f64 / 255.0).collect();
    Ok((n, pixels_per, pixels))
}

/// Parses an IDX label file (magic `0x00000801`): big-endian header
/// `[magic, n]` followed by `n` unsigned byte labels.
pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>> {
    let path_str = path.as_ref().display().to_string();
    let bytes = std::fs::read(path.as_ref()).map_err(|e| Error::io(&path_str, e))?;
    let magic = read_be_u32(&bytes, 0, &path_str)?;
    if magic != IDX_MAGIC_LABELS {
        return Err(Error::IdxParse {
            path: path_str,
            offset: 0,
            msg: format!("bad magic {magic:#010x}, expected {IDX_MAGIC_LABELS:#010x}"),
        });
    }
    let n = read_be_u32(&bytes, 4, &path_str)? as usize;
    let data = &bytes[8..];
    if data.len() != n {
        return Err(Error::IdxParse {
            path: path_str,
            offset: 8,
            msg: format!("expected {n} label bytes, found {}", data.len()),
        });
    }
    Ok(data.iter().map(|b| *b as usize).collect())
}

/// Loads an image/label IDX pair into a [`Dataset`], validating that the
/// sample counts agree and every label is below `num_classes`.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    num_classes: usize,
) -> Result<Dataset> {
    let (n, dim, pixels) = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if labels.len() != n {
        return Err(Error::Domain(format!(
            "idx pair mismatch: {n} images but {} labels",
            labels.len()
        )));
    }
    Dataset::new(pixels, labels, dim, num_classes)
}
