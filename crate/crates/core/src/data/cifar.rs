//! CIFAR binary batches.
//!
//! A 10-class record is `label, R[1024], G[1024], B[1024]`; a 100-class record
//! is `coarse, fine, R[1024], G[1024], B[1024]`. Each plane is a 32x32
//! row-major image. Feature rows keep this channel-planar order, scaled by 1/255.

use std::path::Path;

use super::{Dataset, ImageShape, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

const PIXELS: usize = 3 * 32 * 32;

pub fn parse_cifar_binary(bytes: &[u8], classes: usize) -> Result<Dataset> {
    let label_bytes = match classes {
        10 => 1,
        100 => 2,
        other => return Err(Error::Domain(format!("CIFAR has 10 or 100 classes, not {other}"))),
    };
    let record = label_bytes + PIXELS;
    if !bytes.len().is_multiple_of(record) {
        return Err(Error::format(
            (bytes.len() - bytes.len() % record) as u64,
            format!("file length {} is not a multiple of the {record}-byte record", bytes.len()),
        ));
    }
    let n = bytes.len() / record;
    let mut data = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(record).enumerate() {
        // fine label is the last label byte
        let label = usize::from(rec[label_bytes - 1]);
        if label >= classes {
            return Err(Error::format((i * record + label_bytes - 1) as u64, format!("label {label} out of range")));
        }
        labels.push(label);
        data.extend(rec[label_bytes..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Dataset::new(Matrix::from_vec(n, PIXELS, data)?, labels, classes, Split::Train)?
        .with_image_shape(ImageShape { channels: 3, height: 32, width: 32 })
}

pub fn load_cifar_binary(path: impl AsRef<Path>, classes: usize) -> Result<Dataset> {
    parse_cifar_binary(&std::fs::read(path)?, classes)
}
