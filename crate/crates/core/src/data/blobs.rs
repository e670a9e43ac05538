use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Parameters of the Gaussian-blob task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub per_class: usize,
    pub dims: usize,
    /// Per-coordinate standard deviation around each center.
    pub spread: f64,
    pub seed: u64,
}

/// Fraction of each class assigned to the training split.
const TRAIN_FRACTION: f64 = 0.8;

/// Class `k` sits on axis `k mod dims`, at radius `1 + k / dims`.
///
/// For `classes <= dims` this is the vertex set of the unit simplex; centers
/// do not depend on the seed.
fn center(k: usize, dims: usize) -> Vec<f64> {
    let mut c = vec![0.0; dims];
    c[k % dims] = 1.0 + (k / dims) as f64;
    c
}

/// All `classes * per_class` samples, grouped by class, before any split.
pub fn blob_samples(spec: &BlobSpec) -> Result<Dataset> {
    if spec.classes < 2 || spec.per_class == 0 || spec.dims == 0 {
        return Err(Error::Domain(format!(
            "blobs need classes >= 2, per_class >= 1, dims >= 1 (got {}, {}, {})",
            spec.classes, spec.per_class, spec.dims
        )));
    }
    if !(spec.spread >= 0.0) || !spec.spread.is_finite() {
        return Err(Error::Domain(format!("spread must be finite and non-negative, got {}", spec.spread)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.spread).map_err(|e| Error::Domain(e.to_string()))?;
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for k in 0..spec.classes {
        let c = center(k, spec.dims);
        for _ in 0..spec.per_class {
            data.extend(c.iter().map(|&v| v + noise.sample(&mut rng)));
            labels.push(k);
        }
    }
    Dataset::new(Matrix::from_vec(n, spec.dims, data)?, labels, spec.classes, Split::Train)
}

/// Generates the blob task and splits every class 80/20 into train/test.
pub fn generate_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset)> {
    let all = blob_samples(spec)?;
    let n_train = ((spec.per_class as f64) * TRAIN_FRACTION).round() as usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for k in 0..spec.classes {
        let base = k * spec.per_class;
        train.extend(base..base + n_train);
        test.extend(base + n_train..base + spec.per_class);
    }
    Ok((all.subset(&train).with_split(Split::Train), all.subset(&test).with_split(Split::Test)))
}
