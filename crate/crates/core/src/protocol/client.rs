use crate::data::{client_loader, LabeledDataset, Partition};
use crate::error::Result;
use crate::model::{loss_and_grad, sgd_step_in_place};
use crate::rng::derive_seed;
use crate::sparse::SparseMask;
use crate::tensor::ParamSet;

/// A client's view of the training data.
#[derive(Debug, Clone, Copy)]
pub struct ClientShard<'a> {
    pub dataset: &'a LabeledDataset,
    pub partition: &'a Partition,
    pub client_id: usize,
    pub batch_size: usize,
}

impl ClientShard<'_> {
    pub fn num_samples(&self) -> Result<usize> {
        Ok(self.partition.shard(self.client_id)?.len())
    }
}

/// `epochs` passes of masked SGD starting from `global`. Epoch `e` shuffles
/// with `derive_seed(seed, [e])`.
pub fn client_local_train(
    global: &ParamSet,
    mask: &SparseMask,
    shard: &ClientShard<'_>,
    epochs: usize,
    lr: f32,
    seed: u64,
) -> Result<(ParamSet, usize)> {
    mask.check_params(global)?;
    let num_samples = shard.num_samples()?;
    if num_samples == 0 {
        return Err(crate::error::Error::EmptyDataset);
    }
    let mut local = global.clone();
    if lr == 0.0 || mask.num_selected() == 0 {
        return Ok((local, num_samples));
    }
    for epoch in 0..epochs {
        let batches = client_loader(
            shard.dataset,
            shard.partition,
            shard.client_id,
            shard.batch_size,
            derive_seed(seed, &[epoch as u64]),
        )?;
        for batch in &batches {
            let (_, grads) = loss_and_grad(&local, batch)?;
            sgd_step_in_place(&mut local, &grads, lr, Some(mask))?;
        }
    }
    Ok((local, num_samples))
}
