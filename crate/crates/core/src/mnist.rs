//! MNIST in the IDX format: big-endian headers, magic `0x00000803` for
//! images and `0x00000801` for labels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MnistSet {
    pub rows: usize,
    pub cols: usize,
    /// Image-major, row-major pixels.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[index * n..(index + 1) * n]
    }

    /// The first `n` digits (or all of them).
    pub fn head(&self, n: usize) -> MnistSet {
        let n = n.min(self.len());
        MnistSet {
            rows: self.rows,
            cols: self.cols,
            pixels: self.pixels[..n * self.rows * self.cols].to_vec(),
            labels: self.labels[..n].to_vec(),
        }
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parses an IDX image file. Returns `(rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    if bytes.len() < 16 {
        return Err(Error::data(path, "truncated IDX image header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(Error::data(path, format!("wrong magic {magic:#010x} for an IDX image file (expected {IMAGE_MAGIC:#010x})")));
    }
    let count = be_u32(bytes, 4) as usize;
    let rows = be_u32(bytes, 8) as usize;
    let cols = be_u32(bytes, 12) as usize;
    let payload = count * rows * cols;
    if bytes.len() - 16 < payload {
        return Err(Error::data(path, format!("truncated payload: header declares {payload} bytes, file has {}", bytes.len() - 16)));
    }
    Ok((rows, cols, bytes[16..16 + payload].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(Error::data(path, "truncated IDX label header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(Error::data(path, format!("wrong magic {magic:#010x} for an IDX label file (expected {LABEL_MAGIC:#010x})")));
    }
    let count = be_u32(bytes, 4) as usize;
    if bytes.len() - 8 < count {
        return Err(Error::data(path, format!("truncated payload: header declares {count} labels, file has {}", bytes.len() - 8)));
    }
    let labels = bytes[8..8 + count].to_vec();
    if let Some(bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::data(path, format!("label {bad} outside 0..=9")));
    }
    Ok(labels)
}

pub fn load_mnist(images_path: &Path, labels_path: &Path) -> Result<MnistSet> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::data(p, e.to_string()));
    let (rows, cols, pixels) = parse_idx_images(&read(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read(labels_path)?, labels_path)?;
    let n_images = pixels.len() / (rows * cols).max(1);
    if n_images != labels.len() {
        return Err(Error::data(
            labels_path,
            format!("{} labels but {} has {n_images} images", labels.len(), images_path.display()),
        ));
    }
    Ok(MnistSet { rows, cols, pixels, labels })
}

pub fn write_idx_images(set: &MnistSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + set.pixels.len());
    for v in [IMAGE_MAGIC, set.len() as u32, set.rows as u32, set.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&set.pixels);
    out
}

pub fn write_idx_labels(set: &MnistSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + set.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(set.len() as u32).to_be_bytes());
    out.extend_from_slice(&set.labels);
    out
}
