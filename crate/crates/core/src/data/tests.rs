use std::collections::BTreeMap;

use proptest::prelude::*;

use super::*;
use crate::error::Error;

fn spec(classes: usize, per_class: usize, dims: usize, spread: f64, seed: u64) -> BlobSpec {
    BlobSpec { classes, per_class, dims, spread, seed }
}

fn nearest_centroid_accuracy(train: &Dataset, test: &Dataset) -> f64 {
    let k = train.num_classes();
    let d = train.dims();
    let mut sums = vec![vec![0.0; d]; k];
    let counts = train.class_counts();
    for (row, &l) in train.features().iter_rows().zip(train.labels()) {
        for (s, v) in sums[l].iter_mut().zip(row) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        s.iter_mut().for_each(|v| *v /= c as f64);
    }
    let mut correct = 0;
    for (row, &l) in test.features().iter_rows().zip(test.labels()) {
        let dist = |c: &Vec<f64>| c.iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let best = (0..k).min_by(|&a, &b| dist(&sums[a]).total_cmp(&dist(&sums[b]))).unwrap();
        correct += usize::from(best == l);
    }
    correct as f64 / test.len() as f64
}

#[test]
fn zero_spread_blobs_are_perfectly_separable() {
    let (train, test) = generate_blobs(&spec(4, 25, 3, 0.0, 1)).unwrap();
    assert_eq!(nearest_centroid_accuracy(&train, &test), 1.0);
}

#[test]
fn blobs_are_deterministic() {
    let s = spec(3, 40, 5, 0.7, 99);
    assert_eq!(generate_blobs(&s).unwrap(), generate_blobs(&s).unwrap());
    let other = generate_blobs(&BlobSpec { seed: 100, ..s }).unwrap();
    assert_ne!(generate_blobs(&s).unwrap().0.features(), other.0.features());
}

#[test]
fn blob_class_counts_and_split() {
    let s = spec(3, 100, 4, 0.5, 3);
    assert_eq!(blob_samples(&s).unwrap().class_counts(), vec![100, 100, 100]);
    let (train, test) = generate_blobs(&s).unwrap();
    assert_eq!(train.class_counts(), vec![80, 80, 80]);
    assert_eq!(test.class_counts(), vec![20, 20, 20]);
    assert_eq!(train.split(), Split::Train);
    assert_eq!(test.split(), Split::Test);
}

#[test]
fn blob_centers_do_not_depend_on_seed() {
    let a = blob_samples(&spec(5, 1, 3, 0.0, 1)).unwrap();
    let b = blob_samples(&spec(5, 1, 3, 0.0, 2)).unwrap();
    assert_eq!(a, b);
    // class 4 wraps to axis 1 at radius 2
    assert_eq!(a.features().row(4), &[0.0, 2.0, 0.0]);
}

#[test]
fn invalid_blob_sizes() {
    for s in [spec(1, 10, 2, 1.0, 0), spec(2, 0, 2, 1.0, 0), spec(2, 10, 0, 1.0, 0), spec(2, 10, 2, -1.0, 0)] {
        assert!(matches!(blob_samples(&s), Err(Error::Domain(_))), "{s:?}");
    }
}

fn toy(n: usize) -> Dataset {
    let features = Matrix::from_vec(n, 2, (0..2 * n).map(|v| v as f64).collect()).unwrap();
    Dataset::new(features, (0..n).map(|i| i % 3).collect(), 3, Split::Train).unwrap()
}

#[test]
fn batch_sizes_keep_the_short_tail() {
    let ds = toy(10);
    let sizes: Vec<usize> = batches(&ds, 4, 0, 0).map(|b| b.len()).collect();
    assert_eq!(sizes, vec![4, 4, 2]);
    assert_eq!(batches(&ds, 4, 0, 0).len(), 3);
}

#[test]
fn oversized_batch_holds_everything() {
    let ds = toy(7);
    for size in [7, 8, 100] {
        let all: Vec<Batch> = batches(&ds, size, 5, 1).collect();
        assert_eq!(all.len(), 1);
        let mut idx = all[0].indices.clone();
        idx.sort_unstable();
        assert_eq!(idx, (0..7).collect::<Vec<_>>());
    }
}

#[test]
fn batch_order_is_keyed_by_seed_and_epoch() {
    let ds = toy(50);
    let order = |seed, epoch| batches(&ds, 8, seed, epoch).flat_map(|b| b.indices).collect::<Vec<_>>();
    assert_eq!(order(3, 2), order(3, 2));
    assert_ne!(order(3, 2), order(3, 3));
    assert_ne!(order(3, 2), order(4, 2));
}

#[test]
fn batch_rows_match_their_indices() {
    let ds = toy(9);
    for b in batches(&ds, 4, 1, 0) {
        for (r, &i) in b.indices.iter().enumerate() {
            assert_eq!(b.features.row(r), ds.features().row(i));
            assert_eq!(b.labels[r], ds.labels()[i]);
        }
    }
}

fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut v = Vec::new();
    for w in [0x803, n, rows, cols] {
        v.extend_from_slice(&u32::to_be_bytes(w));
    }
    v.extend_from_slice(pixels);
    v
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(&0x801u32.to_be_bytes());
    v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    v.extend_from_slice(labels);
    v
}

#[test]
fn idx_two_images_exact() {
    let images = idx_images(2, 2, 2, &[0, 255, 51, 102, 255, 0, 0, 204]);
    let ds = parse_idx(&images, &idx_labels(&[1, 0])).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.dims(), 4);
    assert_eq!(ds.features().row(0), &[0.0, 1.0, 0.2, 0.4]);
    assert_eq!(ds.features().row(1), &[1.0, 0.0, 0.0, 0.8]);
    assert_eq!(ds.labels(), &[1, 0]);
    assert_eq!(ds.num_classes(), 2);
    assert_eq!(ds.image_shape(), Some(ImageShape { channels: 1, height: 2, width: 2 }));
}

#[test]
fn idx_bad_label_magic() {
    let images = idx_images(1, 1, 1, &[7]);
    let mut labels = idx_labels(&[0]);
    labels[3] = 0x03;
    match parse_idx(&images, &labels) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn idx_empty_file_is_truncated() {
    let labels = idx_labels(&[0]);
    assert!(matches!(parse_idx(&[], &labels), Err(Error::Format { offset: 0, .. })));
    let images = idx_images(1, 1, 1, &[7]);
    assert!(matches!(parse_idx(&images, &[]), Err(Error::Format { .. })));
}

#[test]
fn idx_count_mismatch_and_truncation() {
    let images = idx_images(2, 1, 2, &[1, 2, 3, 4]);
    assert!(matches!(parse_idx(&images, &idx_labels(&[0])), Err(Error::Format { offset: 4, .. })));
    let short = idx_images(2, 1, 2, &[1, 2, 3]);
    assert!(matches!(parse_idx(&short, &idx_labels(&[0, 1])), Err(Error::Format { offset: 19, .. })));
    let long = idx_images(2, 1, 2, &[1, 2, 3, 4, 5]);
    assert!(matches!(parse_idx(&long, &idx_labels(&[0, 1])), Err(Error::Format { offset: 20, .. })));
}

#[test]
fn idx_load_from_disk_matches_parse() {
    let dir = tempfile::tempdir().unwrap();
    let images = idx_images(3, 1, 2, &[0, 10, 20, 30, 40, 255]);
    let labels = idx_labels(&[2, 0, 1]);
    std::fs::write(dir.path().join("img"), &images).unwrap();
    std::fs::write(dir.path().join("lbl"), &labels).unwrap();
    let loaded = load_idx(dir.path().join("img"), dir.path().join("lbl")).unwrap();
    assert_eq!(loaded, parse_idx(&images, &labels).unwrap());
    assert!(matches!(load_idx(dir.path().join("nope"), dir.path().join("lbl")), Err(Error::Io(_))));
}

fn cifar_record(labels: &[u8], fill: impl Fn(usize) -> u8) -> Vec<u8> {
    let mut v = labels.to_vec();
    v.extend((0..3072).map(fill));
    v
}

#[test]
fn cifar10_single_record() {
    let bytes = cifar_record(&[7], |i| if i == 0 { 255 } else if i == 3071 { 51 } else { (i % 256) as u8 });
    let ds = parse_cifar_binary(&bytes, 10).unwrap();
    assert_eq!(ds.len(), 1);
    assert_eq!(ds.labels(), &[7]);
    let row = ds.features().row(0);
    assert_eq!(row.len(), 3072);
    assert_eq!(row[0], 1.0);
    assert_eq!(row[3071], 0.2);
    // first pixel of the green plane
    assert_eq!(row[1024], f64::from((1024 % 256) as u8) / 255.0);
    assert_eq!(ds.image_shape(), Some(ImageShape { channels: 3, height: 32, width: 32 }));
}

#[test]
fn cifar100_uses_fine_label() {
    let mut bytes = cifar_record(&[3, 42], |_| 0);
    bytes.extend(cifar_record(&[19, 99], |_| 255));
    let ds = parse_cifar_binary(&bytes, 100).unwrap();
    assert_eq!(ds.labels(), &[42, 99]);
    assert_eq!(ds.num_classes(), 100);
    assert!(ds.features().row(1).iter().all(|&v| v == 1.0));
}

#[test]
fn cifar_empty_and_bad_lengths() {
    let empty = parse_cifar_binary(&[], 10).unwrap();
    assert!(empty.is_empty());
    assert_eq!(empty.dims(), 3072);
    let mut bytes = cifar_record(&[1], |_| 0);
    bytes.push(0);
    assert!(matches!(parse_cifar_binary(&bytes, 10), Err(Error::Format { offset: 3073, .. })));
    // a 10-class record is not a 100-class record
    assert!(matches!(parse_cifar_binary(&bytes[..3073], 100), Err(Error::Format { .. })));
    assert!(matches!(parse_cifar_binary(&cifar_record(&[12], |_| 0), 10), Err(Error::Format { offset: 0, .. })));
    assert!(matches!(parse_cifar_binary(&[], 20), Err(Error::Domain(_))));
}

#[test]
fn cifar_load_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data_batch.bin");
    let mut bytes = cifar_record(&[0], |i| (i * 7 % 256) as u8);
    bytes.extend(cifar_record(&[9], |i| (i * 13 % 256) as u8));
    std::fs::write(&path, &bytes).unwrap();
    let a = load_cifar_binary(&path, 10).unwrap();
    assert_eq!(a, load_cifar_binary(&path, 10).unwrap());
    assert!(a.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn dataset_rejects_bad_labels() {
    let m = Matrix::zeros(2, 1);
    assert!(Dataset::new(m.clone(), vec![0, 2], 2, Split::Train).is_err());
    assert!(Dataset::new(m, vec![0], 2, Split::Train).is_err());
}

#[test]
fn flip_reverses_rows_within_each_plane() {
    use rand::SeedableRng;
    let shape = ImageShape { channels: 2, height: 2, width: 3 };
    let original = Matrix::from_vec(1, 12, (0..12).map(f64::from).collect()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut flipped_once = false;
    for _ in 0..16 {
        let mut m = original.clone();
        Augment::Flip.apply(&mut m, shape, &mut rng);
        if m != original {
            flipped_once = true;
            assert_eq!(m.row(0), &[2., 1., 0., 5., 4., 3., 8., 7., 6., 11., 10., 9.]);
        }
    }
    assert!(flipped_once);
    let mut m = original.clone();
    Augment::None.apply(&mut m, shape, &mut rng);
    assert_eq!(m, original);
}

proptest! {
    #[test]
    fn epoch_batches_reproduce_the_dataset(n in 1usize..60, size in 1usize..20, seed: u64, epoch in 0usize..5) {
        let ds = toy(n);
        let mut expected: BTreeMap<(Vec<u64>, usize), usize> = BTreeMap::new();
        for (row, &l) in ds.features().iter_rows().zip(ds.labels()) {
            *expected.entry((row.iter().map(|v| v.to_bits()).collect(), l)).or_default() += 1;
        }
        let mut seen: BTreeMap<(Vec<u64>, usize), usize> = BTreeMap::new();
        for b in batches(&ds, size, seed, epoch) {
            prop_assert!(b.len() <= size && !b.is_empty());
            for (row, &l) in b.features.iter_rows().zip(&b.labels) {
                *seen.entry((row.iter().map(|v| v.to_bits()).collect(), l)).or_default() += 1;
            }
        }
        prop_assert_eq!(seen, expected);
    }

    #[test]
    fn idx_features_stay_in_unit_interval(pixels in proptest::collection::vec(any::<u8>(), 1..40)) {
        let n = pixels.len() as u32;
        let ds = parse_idx(&idx_images(n, 1, 1, &pixels), &idx_labels(&vec![0; pixels.len()])).unwrap();
        prop_assert!(ds.features().as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn class_count_can_be_widened_but_not_below_labels() {
    let ds = toy(5).with_num_classes(7).unwrap();
    assert_eq!(ds.num_classes(), 7);
    assert_eq!(ds.class_counts().len(), 7);
    assert!(matches!(toy(5).with_num_classes(2), Err(Error::Domain(_))));
}
