//! IDX files (MNIST-style): big-endian header, then raw bytes.

use std::path::Path;

use super::{Dataset, ImageShape, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, format!("truncated {what} header")))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0, what)?;
    if magic != expected {
        return Err(Error::format(0, format!("{what} magic {magic:#010x}, expected {expected:#010x}")));
    }
    Ok(())
}

/// Parses an images/labels IDX pair already in memory.
pub fn parse_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    check_magic(images, IDX_IMAGES_MAGIC, "images")?;
    check_magic(labels, IDX_LABELS_MAGIC, "labels")?;
    let n = read_u32(images, 4, "images")? as usize;
    let rows = read_u32(images, 8, "images")? as usize;
    let cols = read_u32(images, 12, "images")? as usize;
    let n_labels = read_u32(labels, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::format(4, format!("{n} images but {n_labels} labels")));
    }
    let pixels = n * rows * cols;
    let body = &images[16..];
    if body.len() < pixels {
        return Err(Error::format(16 + body.len() as u64, format!("image data truncated: need {pixels} bytes")));
    }
    if body.len() > pixels {
        return Err(Error::format(16 + pixels as u64, "trailing bytes after image data"));
    }
    let label_body = &labels[8..];
    if label_body.len() != n {
        return Err(Error::format(
            8 + label_body.len().min(n) as u64,
            format!("label data has {} bytes, expected {n}", label_body.len()),
        ));
    }
    let features = Matrix::from_vec(n, rows * cols, body.iter().map(|&b| f64::from(b) / 255.0).collect())?;
    let labels: Vec<usize> = label_body.iter().map(|&b| usize::from(b)).collect();
    let num_classes = labels.iter().max().map_or(2, |&m| (m + 1).max(2));
    Dataset::new(features, labels, num_classes, Split::Train)?
        .with_image_shape(ImageShape { channels: 1, height: rows, width: cols })
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    parse_idx(&images, &labels)
}
