use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Batch;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub num_clients: usize,
    pub alpha: f64,
    pub seed: u64,
    pub min_samples_per_client: usize,
}

/// Per-client sample indices; disjoint and covering the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    pub fn shard(&self, client_id: usize) -> Result<&[usize]> {
        self.assignments
            .get(client_id)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownClient {
                client_id,
                num_clients: self.assignments.len(),
            })
    }
}

/// Label-skewed split: for each class, client proportions are drawn from a
/// symmetric Dirichlet(alpha) and the class's samples are assigned one by one
/// from that categorical distribution. Clients left below
/// `min_samples_per_client` then receive samples, one at a time, from the
/// currently largest client (lowest id on ties).
pub fn dirichlet_partition(dataset: &LabeledDataset, spec: &PartitionSpec) -> Result<Partition> {
    let n = spec.num_clients;
    if n == 0 {
        return Err(Error::InfeasiblePartition(
            "num_clients must be >= 1".into(),
        ));
    }
    if !(spec.alpha > 0.0 && spec.alpha.is_finite()) {
        return Err(Error::InfeasiblePartition(format!(
            "alpha must be positive, got {}",
            spec.alpha
        )));
    }
    if spec.min_samples_per_client == 0 {
        return Err(Error::InfeasiblePartition(
            "min_samples_per_client must be >= 1".into(),
        ));
    }
    if dataset.len() < n * spec.min_samples_per_client {
        return Err(Error::InfeasiblePartition(format!(
            "{} samples cannot give {} clients {} each",
            dataset.len(),
            n,
            spec.min_samples_per_client
        )));
    }

    let mut rng = Rng::new(spec.seed);
    let mut assignments: Vec<Vec<usize>> = vec![Vec::new(); n];
    for class in 0..dataset.num_classes() {
        let mut idx: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.labels[i] == class)
            .collect();
        rng.shuffle(&mut idx);
        let p = rng.dirichlet(spec.alpha, n);
        for i in idx {
            assignments[rng.categorical(&p)].push(i);
        }
    }

    loop {
        let needy = (0..n)
            .filter(|&c| assignments[c].len() < spec.min_samples_per_client)
            .min_by_key(|&c| (assignments[c].len(), c));
        let Some(needy) = needy else { break };
        let donor = (0..n)
            .max_by_key(|&c| (assignments[c].len(), std::cmp::Reverse(c)))
            .unwrap();
        let moved = assignments[donor].pop().unwrap();
        assignments[needy].push(moved);
    }
    for a in &mut assignments {
        a.sort_unstable();
    }
    Ok(Partition { assignments })
}

/// One epoch of shuffled mini-batches over a client's shard; the final
/// partial batch is kept.
pub fn client_loader(
    dataset: &LabeledDataset,
    partition: &Partition,
    client_id: usize,
    batch_size: usize,
    epoch_seed: u64,
) -> Result<Vec<Batch>> {
    let mut idx = partition.shard(client_id)?.to_vec();
    if idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    Rng::new(epoch_seed).shuffle(&mut idx);
    idx.chunks(batch_size).map(|c| dataset.batch(c)).collect()
}

/// Empirical label distribution over `indices`.
pub fn label_distribution(dataset: &LabeledDataset, indices: &[usize]) -> Vec<f64> {
    let mut p = vec![0.0; dataset.num_classes()];
    for &i in indices {
        p[dataset.labels[i]] += 1.0;
    }
    let total = indices.len().max(1) as f64;
    p.iter_mut().for_each(|v| *v /= total);
    p
}

pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|v| v * v.ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_blobs;
    use proptest::prelude::*;

    fn spec(num_clients: usize, alpha: f64, seed: u64) -> PartitionSpec {
        PartitionSpec {
            num_clients,
            alpha,
            seed,
            min_samples_per_client: 8,
        }
    }

    fn check_cover(p: &Partition, n: usize, min: usize) {
        let mut all: Vec<usize> = p.assignments.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert!(p.assignments.iter().all(|a| a.len() >= min));
    }

    #[test]
    fn single_client_owns_everything() {
        let d = make_blobs(3, 2, 20, 1.0, 1.0, 0).unwrap();
        let p = dirichlet_partition(&d, &spec(1, 0.1, 3)).unwrap();
        assert_eq!(p.assignments, vec![(0..60).collect::<Vec<_>>()]);
    }

    #[test]
    fn infeasible_spec_is_rejected() {
        let d = make_blobs(2, 2, 10, 1.0, 1.0, 0).unwrap();
        assert!(matches!(
            dirichlet_partition(&d, &spec(3, 1.0, 0)),
            Err(Error::InfeasiblePartition(_))
        ));
        assert!(dirichlet_partition(&d, &spec(2, 0.0, 0)).is_err());
    }

    #[test]
    fn small_alpha_still_meets_minimum() {
        let d = make_blobs(10, 2, 30, 1.0, 1.0, 0).unwrap();
        for seed in 0..5 {
            let p = dirichlet_partition(&d, &spec(20, 0.05, seed)).unwrap();
            check_cover(&p, 300, 8);
        }
    }

    #[test]
    fn large_alpha_is_near_iid() {
        let d = make_blobs(2, 2, 10_000, 1.0, 1.0, 0).unwrap();
        let global = label_distribution(&d, &(0..d.len()).collect::<Vec<_>>());
        for seed in 0..5 {
            let p = dirichlet_partition(&d, &spec(10, 100_000.0, seed)).unwrap();
            for a in &p.assignments {
                let tv = tv_distance(&label_distribution(&d, a), &global);
                assert!(tv < 0.05, "seed {seed}: tv {tv}");
            }
        }
    }

    #[test]
    fn small_alpha_concentrates_labels() {
        let d = make_blobs(10, 2, 200, 1.0, 1.0, 0).unwrap();
        let global = entropy(&label_distribution(&d, &(0..d.len()).collect::<Vec<_>>()));
        for seed in 0..5 {
            let p = dirichlet_partition(&d, &spec(10, 0.1, seed)).unwrap();
            let mut h: Vec<f64> = p
                .assignments
                .iter()
                .map(|a| entropy(&label_distribution(&d, a)))
                .collect();
            h.sort_by(f64::total_cmp);
            let median = 0.5 * (h[4] + h[5]);
            // Typically around 0.3-0.45 of the global entropy.
            assert!(median < 0.6 * global, "seed {seed}: {median} vs {global}");
        }
    }

    #[test]
    fn loader_batches() {
        let d = make_blobs(2, 3, 5, 1.0, 1.0, 0).unwrap();
        let p = Partition {
            assignments: vec![(0..10).collect()],
        };
        let batches = client_loader(&d, &p, 0, 8, 42).unwrap();
        assert_eq!(
            batches.iter().map(Batch::len).collect::<Vec<_>>(),
            vec![8, 2]
        );
        assert_eq!(batches, client_loader(&d, &p, 0, 8, 42).unwrap());
        let mut labels: Vec<usize> = batches.iter().flat_map(|b| b.labels.clone()).collect();
        labels.sort_unstable();
        let mut expected = d.labels().to_vec();
        expected.sort_unstable();
        assert_eq!(labels, expected);
        assert!(matches!(
            client_loader(&d, &p, 1, 8, 42),
            Err(Error::UnknownClient { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn partition_is_disjoint_and_covering(
            classes in 1usize..6,
            per_class in 5usize..40,
            clients in 1usize..12,
            log_alpha in -2.0f64..5.0,
            min in 1usize..4,
            seed in any::<u64>(),
        ) {
            let d = make_blobs(classes, 2, per_class, 1.0, 1.0, seed).unwrap();
            let s = PartitionSpec {
                num_clients: clients,
                alpha: 10f64.powf(log_alpha),
                seed,
                min_samples_per_client: min,
            };
            match dirichlet_partition(&d, &s) {
                Ok(p) => check_cover(&p, d.len(), min),
                Err(_) => prop_assert!(d.len() < clients * min),
            }
        }
    }
}
