//! Datasets: synthetic Gaussian blobs, IDX and CIFAR binary readers, and
//! deterministic mini-batching.

mod augment;
mod batch;
mod blobs;
mod cifar;
mod idx;

pub use augment::Augment;
pub use batch::{batches, Batch, Batches};
pub(crate) use batch::shuffle_seed;
pub use blobs::{blob_samples, generate_blobs, BlobSpec};
pub use cifar::{load_cifar_binary, parse_cifar_binary};
pub use idx::{load_idx, parse_idx};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Channel-planar image geometry of each feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Labeled samples. Labels are class ids; one-hot encoding happens at loss time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
    split: Split,
    image_shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, num_classes: usize, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(format!("{} feature rows but {} labels", features.rows(), labels.len())));
        }
        if num_classes < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Domain(format!("label {l} at row {i} not below {num_classes}")));
        }
        Ok(Self { features, labels, num_classes, split, image_shape: None })
    }

    pub fn with_image_shape(mut self, shape: ImageShape) -> Result<Self> {
        if shape.len() != self.features.cols() {
            return Err(Error::shape(format!(
                "image shape {}x{}x{} does not cover {} features",
                shape.channels,
                shape.height,
                shape.width,
                self.features.cols()
            )));
        }
        self.image_shape = Some(shape);
        Ok(self)
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// A new dataset with the given rows, in order.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
            image_shape: self.image_shape,
        }
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    /// Widens (or narrows) the class count; every label must stay below it.
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Domain(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some(&l) = self.labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Domain(format!("label {l} not below {num_classes}")));
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}

#[cfg(test)]
mod tests;
