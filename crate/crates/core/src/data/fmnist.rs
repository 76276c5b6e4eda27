//! Fashion-MNIST as a labeled image set, and the relabeling that splits
//! classes 6–10 into clusters with scrambled labels.
//!
//! Labels are 1-based (1..=10) here; the IDX files store 0..=9.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::math::{Matrix, Rng};
use crate::model::{Batch, Targets};

use super::idx::{read_images, read_labels};
use super::kmeans::{kmeans, KMeans};
use super::Region;

pub const NUM_CLASSES: usize = 10;
/// Classes above this keep their images but get cluster-derived labels.
pub const LAST_SIMPLE_CLASS: u8 = 5;
pub const CLUSTERS_PER_CLASS: usize = 5;
pub const KMEANS_MAX_ITERS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct LabeledImageDataset {
    /// One flattened image per row, pixels in `[0, 1]`.
    pub images: Matrix,
    /// Current labels, `1..=10`.
    pub labels: Vec<u8>,
    /// Labels as read from disk, `1..=10`.
    pub original_labels: Vec<u8>,
    pub regions: Vec<Region>,
    pub split: Split,
}

fn region_of(original: u8) -> Region {
    if original <= LAST_SIMPLE_CLASS {
        Region::Simple
    } else {
        Region::Complex
    }
}

/// Reads an IDX image/label pair; pixels are scaled by `1/255`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledImageDataset> {
    let images = read_images(images_path)?;
    let raw = read_labels(labels_path)?;
    if images.count() != raw.len() {
        return Err(Error::CountMismatch {
            images: images.count(),
            labels: raw.len(),
        });
    }
    if let Some(&bad) = raw.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::Parse {
            path: labels_path.to_path_buf(),
            message: format!("label {bad} outside 0..{NUM_CLASSES}"),
        });
    }
    let pixels = images.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let images = Matrix::from_vec(raw.len(), images.rows * images.cols, pixels)?;
    let labels: Vec<u8> = raw.iter().map(|l| l + 1).collect();
    Ok(LabeledImageDataset {
        images,
        regions: labels.iter().map(|&l| region_of(l)).collect(),
        original_labels: labels.clone(),
        labels,
        split,
    })
}

/// `train-*` and `t10k-*` files under `dir`, in the standard file names.
pub fn load_dir(dir: &Path) -> Result<(LabeledImageDataset, LabeledImageDataset)> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}

impl LabeledImageDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LabeledImageDataset {
        let mut images = Matrix::zeros(idx.len(), self.images.cols());
        for (dst, &i) in idx.iter().enumerate() {
            images.row_mut(dst).copy_from_slice(self.images.row(i));
        }
        LabeledImageDataset {
            images,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            original_labels: idx.iter().map(|&i| self.original_labels[i]).collect(),
            regions: idx.iter().map(|&i| self.regions[i]).collect(),
            split: self.split,
        }
    }

    /// `n` points drawn without replacement, kept in file order.
    pub fn subsample(&self, n: usize, rng: &mut Rng) -> LabeledImageDataset {
        if n >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut idx);
        idx.truncate(n);
        idx.sort_unstable();
        self.select(&idx)
    }

    /// Up to `per_region` points from each region, in file order.
    pub fn region_subsample(&self, per_region: usize, rng: &mut Rng) -> Vec<usize> {
        let mut out = Vec::new();
        for region in [Region::Simple, Region::Complex] {
            let mut idx: Vec<usize> = (0..self.len()).filter(|&i| self.regions[i] == region).collect();
            rng.shuffle(&mut idx);
            idx.truncate(per_region);
            out.extend(idx);
        }
        out.sort_unstable();
        out
    }

    /// Zero-based class targets for softmax training.
    pub fn batch(&self) -> Batch {
        let classes = self.labels.iter().map(|&l| l as usize - 1).collect();
        Batch::new(self.images.clone(), Targets::Classes(classes)).expect("one label per image")
    }

    fn class_rows(&self, original: u8) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.original_labels[i] == original)
            .collect()
    }
}

/// Result of [`modify_fmnist_labels`].
#[derive(Clone, Debug)]
pub struct ModifiedFmnist {
    pub train: LabeledImageDataset,
    pub test: LabeledImageDataset,
    /// Clusters of original class `6 + c` are at `clusters[c]`.
    pub clusters: Vec<KMeans>,
    /// Label given to cluster `j` of original class `6 + c`, at
    /// `cluster_labels[c * 5 + j]`.
    pub cluster_labels: Vec<u8>,
}

/// Splits each of classes 6..=10 into five k-means clusters (on the
/// training images) and hands the 25 clusters the labels 6..=10, each
/// label exactly five times, in a random order. Test images of those
/// classes take the label of their nearest training centroid.
pub fn modify_fmnist_labels(
    train: &LabeledImageDataset,
    test: &LabeledImageDataset,
    rng: &mut Rng,
) -> Result<ModifiedFmnist> {
    for class in 1..=NUM_CLASSES as u8 {
        if !train.original_labels.contains(&class) {
            return Err(Error::MissingClass(class));
        }
    }
    let complex: Vec<u8> = (LAST_SIMPLE_CLASS + 1..=NUM_CLASSES as u8).collect();
    let mut clusters = Vec::with_capacity(complex.len());
    for &class in &complex {
        let rows = train.class_rows(class);
        let points = train.select(&rows).images;
        clusters.push(kmeans(&points, CLUSTERS_PER_CLASS, rng, KMEANS_MAX_ITERS)?);
    }
    let mut cluster_labels: Vec<u8> = complex
        .iter()
        .flat_map(|&l| std::iter::repeat_n(l, CLUSTERS_PER_CLASS))
        .collect();
    rng.shuffle(&mut cluster_labels);

    let mut new_train = train.clone();
    for (c, &class) in complex.iter().enumerate() {
        for (j, i) in train.class_rows(class).into_iter().enumerate() {
            let cluster = clusters[c].assignments[j];
            new_train.labels[i] = cluster_labels[c * CLUSTERS_PER_CLASS + cluster];
        }
    }
    let mut new_test = test.clone();
    for i in 0..test.len() {
        let class = test.original_labels[i];
        if class > LAST_SIMPLE_CLASS {
            let c = (class - LAST_SIMPLE_CLASS - 1) as usize;
            let cluster = clusters[c].nearest(test.images.row(i));
            new_test.labels[i] = cluster_labels[c * CLUSTERS_PER_CLASS + cluster];
        }
    }
    Ok(ModifiedFmnist {
        train: new_train,
        test: new_test,
        clusters,
        cluster_labels,
    })
}
