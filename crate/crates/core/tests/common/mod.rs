#![allow(dead_code)]

use ftte::data::{dirichlet_partition, make_blobs, LabeledDataset, Partition, PartitionSpec};
use ftte::model::init_params;
use ftte::protocol::{ServerConfig, Strategy};
use ftte::sim::{DelayMode, SimConfig, SimInputs};
use ftte::sparse::SparseMask;
use ftte::tensor::{ModelSpec, ParamSet};

pub struct Fixture {
    pub spec: ModelSpec,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub partition: Partition,
    pub initial: ParamSet,
}

impl Fixture {
    pub fn new(num_clients: usize, alpha: f64, seed: u64) -> Self {
        let all = make_blobs(2, 6, 120, 2.5, 1.0, seed).unwrap();
        let mut parts = all.split_per_class(&[100, 20]).unwrap().into_iter();
        let train = parts.next().unwrap();
        let test = parts.next().unwrap();
        let partition = dirichlet_partition(
            &train,
            &PartitionSpec {
                num_clients,
                alpha,
                seed: seed + 1,
                min_samples_per_client: 4,
            },
        )
        .unwrap();
        let spec = ModelSpec::new(vec![6, 8, 2], seed + 2).unwrap();
        let initial = init_params(&spec).unwrap();
        Fixture {
            spec,
            train,
            test,
            partition,
            initial,
        }
    }

    pub fn inputs<'a>(&'a self, mask: &'a SparseMask) -> SimInputs<'a> {
        SimInputs {
            train: &self.train,
            test: &self.test,
            partition: &self.partition,
            initial: &self.initial,
            mask,
        }
    }
}

pub fn sim_config(strategy: Strategy, num_clients: usize, buffer: usize) -> SimConfig {
    SimConfig {
        server: ServerConfig::new(strategy, buffer),
        num_clients,
        straggler_fraction: 0.5,
        straggler_delay_max_s: 30.0,
        delay_mode: DelayMode::Uniform,
        base_compute_time_s: 1.0,
        local_epochs: 1,
        lr: 0.1,
        batch_size: 8,
        target_accuracy: 2.0,
        max_steps: 200,
        max_sim_time_s: None,
        eval_every_aggregations: 1,
        eval_batch_size: 64,
        count_downloads: true,
        seed: 7,
        workers: 1,
    }
}
