use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ImageShape;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Optional image augmentation, applied to a whole batch before it is shared by all networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Augment {
    #[default]
    None,
    /// Horizontal flip with probability 1/2.
    Flip,
    /// Flip, then a random crop from the zero-padded image (padding 2 on each side).
    FlipCrop,
}

impl FromStr for Augment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Augment::None),
            "flip" => Ok(Augment::Flip),
            "flip_crop" => Ok(Augment::FlipCrop),
            other => Err(Error::config("data.augment", format!("unknown augmentation `{other}`"))),
        }
    }
}

const CROP_PAD: usize = 2;

impl Augment {
    pub fn apply<R: Rng + ?Sized>(self, batch: &mut Matrix, shape: ImageShape, rng: &mut R) {
        if self == Augment::None {
            return;
        }
        let mut scratch = vec![0.0; shape.len()];
        for n in 0..batch.rows() {
            let row = batch.row_mut(n);
            if rng.random_bool(0.5) {
                for c in 0..shape.channels {
                    for y in 0..shape.height {
                        let start = (c * shape.height + y) * shape.width;
                        row[start..start + shape.width].reverse();
                    }
                }
            }
            if self == Augment::FlipCrop {
                let dy = rng.random_range(0..=2 * CROP_PAD) as isize - CROP_PAD as isize;
                let dx = rng.random_range(0..=2 * CROP_PAD) as isize - CROP_PAD as isize;
                shift(row, &mut scratch, shape, dy, dx);
                row.copy_from_slice(&scratch);
            }
        }
    }
}

/// `out[y][x] = row[y + dy][x + dx]`, zero outside the image.
fn shift(row: &[f64], out: &mut [f64], shape: ImageShape, dy: isize, dx: isize) {
    let (h, w) = (shape.height as isize, shape.width as isize);
    for c in 0..shape.channels {
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = (y + dy, x + dx);
                let v = if (0..h).contains(&sy) && (0..w).contains(&sx) {
                    row[(c * shape.height + sy as usize) * shape.width + sx as usize]
                } else {
                    0.0
                };
                out[(c * shape.height + y as usize) * shape.width + x as usize] = v;
            }
        }
    }
}
