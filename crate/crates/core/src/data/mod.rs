//! Synthetic datasets, Dirichlet partitioning and client mini-batch loaders.

mod file;
mod partition;

pub use file::{read_dataset, write_dataset, DATASET_MAGIC};
pub use partition::{
    client_loader, dirichlet_partition, entropy, label_distribution, tv_distance, Partition,
    PartitionSpec,
};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{Batch, Tensor};

/// Row-major inputs `[n, dim]` with class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub(crate) inputs: Vec<f32>,
    pub(crate) labels: Vec<usize>,
    pub(crate) dim: usize,
    pub(crate) num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        inputs: Vec<f32>,
        labels: Vec<usize>,
        dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if labels.is_empty() || dim == 0 || num_classes == 0 {
            return Err(Error::EmptyDataset);
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "{} inputs for {} samples of dim {dim}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Shape(format!("label {y} >= {num_classes} classes")));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite input value".into()));
        }
        Ok(LabeledDataset {
            inputs,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn inputs(&self) -> &[f32] {
        &self.inputs
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Samples at `indices`, in that order, as one batch.
    pub fn batch(&self, indices: &[usize]) -> Result<Batch> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Shape(format!("sample index {i} >= {}", self.len())));
            }
            data.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(Tensor::new(vec![indices.len(), self.dim], data)?, labels)
    }

    /// Sequential batches covering the whole dataset.
    pub fn batches(&self, batch_size: usize) -> Result<Vec<Batch>> {
        let idx: Vec<usize> = (0..self.len()).collect();
        idx.chunks(batch_size.max(1))
            .map(|c| self.batch(c))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let b = self.batch(indices)?;
        LabeledDataset::new(
            b.inputs.data().to_vec(),
            b.labels,
            self.dim,
            self.num_classes,
        )
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Stratified split: within each class (in dataset order) the first
    /// `sizes[0]` samples go to part 0, the next `sizes[1]` to part 1, and so on.
    pub fn split_per_class(&self, sizes: &[usize]) -> Result<Vec<Self>> {
        let mut parts: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
        let mut seen = vec![0usize; self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            let k = seen[y];
            seen[y] += 1;
            let mut acc = 0;
            for (p, &s) in sizes.iter().enumerate() {
                if k < acc + s {
                    parts[p].push(i);
                    break;
                }
                acc += s;
            }
        }
        parts.iter().map(|idx| self.subset(idx)).collect()
    }
}

/// Gaussian blobs around `num_classes` random unit directions scaled by
/// `class_separation`. Output is class-major: all of class 0, then class 1, ...
///
/// Class directions are drawn before any sample, so they depend only on
/// `seed` and `dim`.
pub fn make_blobs(
    num_classes: usize,
    dim: usize,
    samples_per_class: usize,
    class_separation: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if num_classes == 0 || dim == 0 || samples_per_class == 0 {
        return Err(Error::Config("blob counts must be >= 1".into()));
    }
    if !(class_separation >= 0.0 && noise_sigma >= 0.0) {
        return Err(Error::Config(
            "class separation and noise must be >= 0".into(),
        ));
    }
    let mut rng = Rng::new(seed);
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            let v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter().map(|x| class_separation * x / norm).collect()
            } else {
                let mut e = vec![0.0; dim];
                e[c % dim] = class_separation;
                e
            }
        })
        .collect();
    let n = num_classes * samples_per_class;
    let mut inputs = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..samples_per_class {
            for &m in center {
                inputs.push((m + noise_sigma * rng.normal()) as f32);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(inputs, labels, dim, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_blobs_sit_on_centers() {
        let d = make_blobs(3, 5, 4, 2.0, 0.0, 1).unwrap();
        assert_eq!(d.len(), 12);
        for c in 0..3 {
            let first = d.row(c * 4).to_vec();
            let norm: f32 = first.iter().map(|x| x * x).sum::<f32>().sqrt();
            assert!((norm - 2.0).abs() < 1e-5);
            for k in 1..4 {
                assert_eq!(d.row(c * 4 + k), first.as_slice());
            }
        }
    }

    #[test]
    fn blobs_are_deterministic() {
        assert_eq!(
            make_blobs(2, 3, 10, 1.0, 1.0, 4).unwrap(),
            make_blobs(2, 3, 10, 1.0, 1.0, 4).unwrap()
        );
        assert_ne!(
            make_blobs(2, 3, 10, 1.0, 1.0, 4).unwrap(),
            make_blobs(2, 3, 10, 1.0, 1.0, 5).unwrap()
        );
    }

    #[test]
    fn stratified_split_sizes() {
        let d = make_blobs(2, 3, 10, 1.0, 1.0, 4).unwrap();
        let parts = d.split_per_class(&[6, 3, 1]).unwrap();
        assert_eq!(parts[0].class_counts(), vec![6, 6]);
        assert_eq!(parts[1].class_counts(), vec![3, 3]);
        assert_eq!(parts[2].class_counts(), vec![1, 1]);
    }

    #[test]
    fn dataset_validation() {
        assert!(LabeledDataset::new(vec![], vec![], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0; 3], vec![0], 2, 2).is_err());
        assert!(LabeledDataset::new(vec![0.0; 2], vec![2], 2, 2).is_err());
    }
}
