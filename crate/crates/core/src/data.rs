//! Binary image datasets: IDX ingestion, a synthetic stripe task and
//! stratified splits.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Full,
    Train,
    Valid,
}

/// Channel-major images with pixels in `[0, 1]` and binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset<T> {
    pub images: Vec<Vec<T>>,
    pub labels: Vec<u8>,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub split: SplitTag,
}

impl<T: Scalar> ImageDataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&y| y == 1).count();
        [self.len() - ones, ones]
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&y| y as usize).collect()
    }

    fn subset(&self, idx: &[usize], split: SplitTag) -> Self {
        Self {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            channels: self.channels,
            height: self.height,
            width: self.width,
            split,
        }
    }
}

fn read_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("four bytes")))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses an IDX image file into `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("images: bad magic 0x{magic:08x}")));
    }
    let n = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(Error::Format(format!(
            "images: header promises {n}×{rows}×{cols} pixels, file holds {}",
            body.len()
        )));
    }
    Ok((n, rows, cols, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("labels: bad magic 0x{magic:08x}")));
    }
    let n = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!("labels: header promises {n} labels, file holds {}", body.len())));
    }
    Ok(body)
}

/// Keeps the images of `class_a` and `class_b`, relabelled to 0 and 1, with
/// pixels scaled by 1/255.
pub fn dataset_from_idx<T: Scalar>(images: &[u8], labels: &[u8], class_a: u8, class_b: u8) -> Result<ImageDataset<T>> {
    if class_a == class_b {
        return Err(invalid(format!("class pair ({class_a}, {class_b}) must name two different classes")));
    }
    let (n, rows, cols, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", labels.len())));
    }
    for class in [class_a, class_b] {
        if !labels.contains(&class) {
            return Err(Error::EmptyClass(class));
        }
    }
    let scale = T::lit(1.0 / 255.0);
    let mut out = ImageDataset {
        images: Vec::new(),
        labels: Vec::new(),
        channels: 1,
        height: rows,
        width: cols,
        split: SplitTag::Full,
    };
    for (img, &y) in pixels.chunks_exact(rows * cols).zip(labels) {
        let label = match y {
            _ if y == class_a => 0,
            _ if y == class_b => 1,
            _ => continue,
        };
        out.images.push(img.iter().map(|&p| T::lit(p as f64) * scale).collect());
        out.labels.push(label);
    }
    Ok(out)
}

pub fn load_idx<T: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    class_a: u8,
    class_b: u8,
) -> Result<ImageDataset<T>> {
    dataset_from_idx(&std::fs::read(images_path)?, &std::fs::read(labels_path)?, class_a, class_b)
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if rows == 0 || cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
        return Err(invalid(format!("{} pixels do not tile {rows}×{cols} images", pixels.len())));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, (pixels.len() / (rows * cols)) as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn write_idx(
    images_path: &Path,
    labels_path: &Path,
    rows: usize,
    cols: usize,
    pixels: &[u8],
    labels: &[u8],
) -> Result<()> {
    std::fs::File::create(images_path)?.write_all(&encode_idx_images(rows, cols, pixels)?)?;
    std::fs::File::create(labels_path)?.write_all(&encode_idx_labels(labels))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_per_class: usize,
    pub size: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { n_per_class: 140, size: 16, noise_std: 0.25, seed: 0 }
    }
}

pub const STRIPE_ON: f64 = 0.8;
pub const STRIPE_OFF: f64 = 0.2;

/// Class 0: one-pixel horizontal stripes; class 1: vertical. Both start
/// with a bright line at index 0. Samples alternate between classes.
pub fn synthetic_dataset<T: Scalar>(spec: &SyntheticSpec) -> Result<ImageDataset<T>> {
    if spec.n_per_class == 0 || spec.size == 0 {
        return Err(invalid("synthetic dataset needs at least one image per class and a positive size"));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(invalid(format!("noise std {} must be finite and non-negative", spec.noise_std)));
    }
    let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let s = spec.size;
    let mut out = ImageDataset {
        images: Vec::with_capacity(2 * spec.n_per_class),
        labels: Vec::with_capacity(2 * spec.n_per_class),
        channels: 1,
        height: s,
        width: s,
        split: SplitTag::Full,
    };
    for _ in 0..spec.n_per_class {
        for label in [0u8, 1] {
            let img = (0..s * s)
                .map(|i| {
                    let line = if label == 0 { i / s } else { i % s };
                    let base = if line % 2 == 0 { STRIPE_ON } else { STRIPE_OFF };
                    T::lit((base + noise.sample(&mut rng)).clamp(0.0, 1.0))
                })
                .collect();
            out.images.push(img);
            out.labels.push(label);
        }
    }
    Ok(out)
}

/// Disjoint, class-stratified train and validation subsets drawn by a
/// seeded shuffle. Class quotas follow the global ratio up to rounding.
pub fn split<T: Scalar>(
    dataset: &ImageDataset<T>,
    train_n: usize,
    valid_n: usize,
    seed: u64,
) -> Result<(ImageDataset<T>, ImageDataset<T>)> {
    let n = dataset.len();
    if train_n + valid_n > n {
        return Err(invalid(format!("cannot draw {train_n} + {valid_n} samples from {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in dataset.labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    by_class.iter_mut().for_each(|c| c.shuffle(&mut rng));
    let quota = |m: usize| -> [usize; 2] {
        let first = ((m * by_class[0].len()) as f64 / n.max(1) as f64).round() as usize;
        [first, m - first]
    };
    let (tq, mut vq) = (quota(train_n), quota(valid_n));
    // Independent rounding can overdraw one class by a single sample.
    let sizes = [by_class[0].len(), by_class[1].len()];
    if tq[0] + vq[0] > sizes[0] {
        vq = [vq[0] - 1, vq[1] + 1];
    } else if tq[1] + vq[1] > sizes[1] {
        vq = [vq[0] + 1, vq[1] - 1];
    }
    let (mut train, mut valid) = (Vec::with_capacity(train_n), Vec::with_capacity(valid_n));
    for (c, members) in by_class.iter().enumerate() {
        if tq[c] + vq[c] > members.len() {
            return Err(invalid(format!("class {c} cannot supply {} samples", tq[c] + vq[c])));
        }
        train.extend_from_slice(&members[..tq[c]]);
        valid.extend_from_slice(&members[tq[c]..tq[c] + vq[c]]);
    }
    train.shuffle(&mut rng);
    valid.shuffle(&mut rng);
    Ok((dataset.subset(&train, SplitTag::Train), dataset.subset(&valid, SplitTag::Valid)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..4 * 3 * 2).map(|i| (i * 10) as u8).collect();
        (encode_idx_images(3, 2, &pixels).unwrap(), encode_idx_labels(&[0, 1, 2, 1]))
    }

    #[test]
    fn hand_crafted_fixture_bytes() {
        let (images, labels) = fixture();
        assert_eq!(&images[..16], &[0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 3, 0, 0, 0, 2]);
        assert_eq!(&labels[..8], &[0, 0, 8, 1, 0, 0, 0, 4]);
        let (n, r, c, px) = parse_idx_images(&images).unwrap();
        assert_eq!((n, r, c, px.len()), (4, 3, 2, 24));
    }

    #[test]
    fn filters_and_relabels() {
        let (images, labels) = fixture();
        let ds: ImageDataset<f64> = dataset_from_idx(&images, &labels, 0, 1).unwrap();
        assert_eq!(ds.labels, vec![0, 1, 1]);
        assert_eq!((ds.height, ds.width), (3, 2));
        assert_eq!(ds.images[1][0], 60.0 / 255.0);
        let swapped: ImageDataset<f64> = dataset_from_idx(&images, &labels, 2, 0).unwrap();
        assert_eq!(swapped.labels, vec![1, 0]);
        assert_eq!(swapped.images[1][0], 120.0 / 255.0);
    }

    #[test]
    fn malformed_files_are_rejected() {
        let (mut images, labels) = fixture();
        assert!(matches!(dataset_from_idx::<f64>(&labels, &labels, 0, 1), Err(Error::Format(_))));
        assert!(matches!(dataset_from_idx::<f64>(&images, &images, 0, 1), Err(Error::Format(_))));
        assert!(matches!(dataset_from_idx::<f64>(&images, &labels, 0, 7), Err(Error::EmptyClass(7))));
        assert!(dataset_from_idx::<f64>(&images, &labels, 1, 1).is_err());
        assert!(matches!(dataset_from_idx::<f64>(&images, &encode_idx_labels(&[0, 1]), 0, 1), Err(Error::Format(_))));
        images.pop();
        assert!(matches!(dataset_from_idx::<f64>(&images, &labels, 0, 1), Err(Error::Format(_))));
        assert!(matches!(parse_idx_images(&images[..6]), Err(Error::Format(_))));
    }

    #[test]
    fn file_round_trip_is_pixel_exact() {
        let dir = std::env::temp_dir().join(format!("idx-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let pixels: Vec<u8> = (0..=255u8).chain(0..=255).collect();
        let labels: Vec<u8> = (0..8).map(|i| (i % 2) as u8).collect();
        let (ip, lp) = (dir.join("img.idx"), dir.join("lbl.idx"));
        write_idx(&ip, &lp, 8, 8, &pixels, &labels).unwrap();
        let ds: ImageDataset<f64> = load_idx(&ip, &lp, 0, 1).unwrap();
        std::fs::remove_dir_all(&dir).unwrap();
        let back: Vec<u8> = ds.images.iter().flatten().map(|&p| (p * 255.0).round() as u8).collect();
        assert_eq!(back, pixels);
        assert_eq!(ds.labels, labels);
        assert!(ds.images.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SyntheticSpec { n_per_class: 100, size: 16, noise_std: 0.3, seed: 4 };
        let a: ImageDataset<f64> = synthetic_dataset(&spec).unwrap();
        let b: ImageDataset<f64> = synthetic_dataset(&spec).unwrap();
        assert_eq!(a.len(), 200);
        assert_eq!(a.class_counts(), [100, 100]);
        let bits = |d: &ImageDataset<f64>| d.images.iter().flatten().map(|p| p.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_ne!(bits(&a), bits(&synthetic_dataset(&SyntheticSpec { seed: 5, ..spec }).unwrap()));
        assert!(a.images.iter().flatten().all(|p| (0.0..=1.0).contains(p)));
        assert!(synthetic_dataset::<f64>(&SyntheticSpec { n_per_class: 0, ..spec }).is_err());
        assert!(synthetic_dataset::<f64>(&SyntheticSpec { noise_std: -1.0, ..spec }).is_err());
    }

    #[test]
    fn noiseless_classes_split_on_one_pixel_difference() {
        let spec = SyntheticSpec { n_per_class: 5, size: 8, noise_std: 0.0, seed: 0 };
        let ds: ImageDataset<f64> = synthetic_dataset(&spec).unwrap();
        for (img, &y) in ds.images.iter().zip(&ds.labels) {
            // Pixel (0,0) minus pixel (1,0): bright-dark for rows, equal for columns.
            let feature = img[0] - img[8];
            assert_eq!(feature > 0.3, y == 0);
        }
    }

    #[test]
    fn splits_are_disjoint_stratified_and_seeded() {
        let spec = SyntheticSpec { n_per_class: 60, size: 4, noise_std: 0.1, seed: 1 };
        let mut ds: ImageDataset<f64> = synthetic_dataset(&spec).unwrap();
        // Unbalance the classes: 60 of class 0, 30 of class 1.
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == 0 || i % 4 == 1).collect();
        ds = ds.subset(&keep, SplitTag::Full);
        let n = ds.len();
        let ratio = ds.class_counts()[0] as f64 / n as f64;
        for (tn, vn) in [(50, 20), (60, 30), (7, 3), (n, 0)] {
            let (tr, va) = split(&ds, tn, vn, 9).unwrap();
            assert_eq!((tr.len(), va.len()), (tn, vn));
            for part in [&tr, &va] {
                let expected = ratio * part.len() as f64;
                assert!((part.class_counts()[0] as f64 - expected).abs() <= 1.0);
            }
            let key = |img: &Vec<f64>| img.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
            let train_keys: std::collections::HashSet<_> = tr.images.iter().map(key).collect();
            assert!(va.images.iter().all(|img| !train_keys.contains(&key(img))));
            assert_eq!(split(&ds, tn, vn, 9).unwrap(), (tr.clone(), va.clone()));
        }
        assert!(split(&ds, n, 1, 0).is_err());
    }
}
