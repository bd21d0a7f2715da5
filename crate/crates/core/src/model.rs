//! Forward pass, softmax cross-entropy gradients, masked SGD and evaluation.
//!
//! Parameters are stored as `f32`; forward and backward passes accumulate in
//! `f64` and round once when writing logits or gradients.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::sparse::SparseMask;
use crate::tensor::{Batch, Layer, ModelSpec, ParamSet, Tensor, Unit};

/// Glorot-uniform weights, zero biases.
pub fn init_params(spec: &ModelSpec) -> Result<ParamSet> {
    spec.validate()?;
    let mut rng = Rng::new(spec.init_seed);
    let layers = (0..spec.num_layers())
        .map(|l| {
            let (fan_in, fan_out) = spec.layer_shape(l);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.uniform_range(-bound, bound) as f32)
                .collect();
            Layer {
                name: ModelSpec::layer_name(l),
                weights: Tensor::new(vec![fan_in, fan_out], weights).expect("finite init"),
                bias: Tensor::zeros(vec![fan_out]),
            }
        })
        .collect();
    Ok(ParamSet { layers })
}

/// Activations recorded by [`forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    /// Input to each dense layer (post-ReLU of the previous one), `[b, fan_in]`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation output of each dense layer, `[b, fan_out]`.
    pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn logits(&self) -> &[f64] {
        self.pre.last().expect("at least one layer")
    }
}

fn check_batch(params: &ParamSet, batch: &Batch) -> Result<()> {
    let dims = params.layer_dims();
    if dims.is_empty() {
        return Err(Error::Shape("parameter set has no layers".into()));
    }
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    if batch.dim() != dims[0] {
        return Err(Error::Shape(format!(
            "batch dim {} but model input dim {}",
            batch.dim(),
            dims[0]
        )));
    }
    let classes = *dims.last().unwrap();
    if let Some(&y) = batch.labels.iter().find(|&&y| y >= classes) {
        return Err(Error::Shape(format!("label {y} >= {classes} classes")));
    }
    Ok(())
}

fn forward_f64(params: &ParamSet, batch: &Batch) -> ForwardCache {
    let b = batch.len();
    let mut inputs = Vec::with_capacity(params.num_layers());
    let mut pre = Vec::with_capacity(params.num_layers());
    let mut act: Vec<f64> = batch.inputs.data().iter().map(|&v| v as f64).collect();
    for (l, layer) in params.layers.iter().enumerate() {
        let (fan_in, fan_out) = (layer.weights.shape()[0], layer.weights.shape()[1]);
        let w = layer.weights.data();
        let bias = layer.bias.data();
        let mut z = vec![0.0f64; b * fan_out];
        for r in 0..b {
            let x = &act[r * fan_in..(r + 1) * fan_in];
            let out = &mut z[r * fan_out..(r + 1) * fan_out];
            for (o, &bv) in out.iter_mut().zip(bias) {
                *o = bv as f64;
            }
            for (i, &xv) in x.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let row = &w[i * fan_out..(i + 1) * fan_out];
                for (o, &wv) in out.iter_mut().zip(row) {
                    *o += xv * wv as f64;
                }
            }
        }
        let next = if l + 1 < params.num_layers() {
            Some(z.iter().map(|&v| v.max(0.0)).collect::<Vec<_>>())
        } else {
            None
        };
        inputs.push(act);
        pre.push(z);
        if let Some(n) = next {
            act = n;
        } else {
            act = Vec::new();
        }
    }
    ForwardCache {
        batch: b,
        inputs,
        pre,
    }
}

/// Logits `[b, classes]` plus the activation record.
pub fn forward(params: &ParamSet, batch: &Batch) -> Result<(Tensor, ForwardCache)> {
    check_batch(params, batch)?;
    let cache = forward_f64(params, batch);
    let classes = *params.layer_dims().last().unwrap();
    let logits = cache.logits().iter().map(|&v| v as f32).collect();
    let logits = Tensor::new(vec![batch.len(), classes], logits)?;
    Ok((logits, cache))
}

/// Row-wise softmax with max subtraction; returns probabilities and `-ln p[label]`.
fn softmax_xent(row: &[f64], label: usize) -> (Vec<f64>, f64) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let loss = sum.ln() - (row[label] - max);
    (exps.into_iter().map(|e| e / sum).collect(), loss)
}

/// Mean softmax cross-entropy and its gradient with respect to every parameter.
pub fn loss_and_grad(params: &ParamSet, batch: &Batch) -> Result<(f64, ParamSet)> {
    check_batch(params, batch)?;
    let cache = forward_f64(params, batch);
    let b = cache.batch;
    let classes = *params.layer_dims().last().unwrap();

    let mut loss = 0.0;
    let mut dz = vec![0.0f64; b * classes];
    for r in 0..b {
        let row = &cache.logits()[r * classes..(r + 1) * classes];
        let (p, l) = softmax_xent(row, batch.labels[r]);
        loss += l;
        for (c, pc) in p.into_iter().enumerate() {
            let target = if c == batch.labels[r] { 1.0 } else { 0.0 };
            dz[r * classes + c] = (pc - target) / b as f64;
        }
    }
    loss /= b as f64;

    let mut grads = Vec::with_capacity(params.num_layers());
    for l in (0..params.num_layers()).rev() {
        let layer = &params.layers[l];
        let (fan_in, fan_out) = (layer.weights.shape()[0], layer.weights.shape()[1]);
        let x = &cache.inputs[l];
        let mut gw = vec![0.0f64; fan_in * fan_out];
        let mut gb = vec![0.0f64; fan_out];
        for r in 0..b {
            let d = &dz[r * fan_out..(r + 1) * fan_out];
            for (g, &dv) in gb.iter_mut().zip(d) {
                *g += dv;
            }
            for i in 0..fan_in {
                let xv = x[r * fan_in + i];
                if xv == 0.0 {
                    continue;
                }
                for (g, &dv) in gw[i * fan_out..(i + 1) * fan_out].iter_mut().zip(d) {
                    *g += xv * dv;
                }
            }
        }
        if l > 0 {
            let w = layer.weights.data();
            let prev_pre = &cache.pre[l - 1];
            let mut dx = vec![0.0f64; b * fan_in];
            for r in 0..b {
                let d = &dz[r * fan_out..(r + 1) * fan_out];
                for i in 0..fan_in {
                    if prev_pre[r * fan_in + i] <= 0.0 {
                        continue;
                    }
                    let row = &w[i * fan_out..(i + 1) * fan_out];
                    dx[r * fan_in + i] = row.iter().zip(d).map(|(&wv, &dv)| wv as f64 * dv).sum();
                }
            }
            dz = dx;
        }
        grads.push(Layer {
            name: layer.name.clone(),
            weights: Tensor::new(
                vec![fan_in, fan_out],
                gw.into_iter().map(|v| v as f32).collect(),
            )?,
            bias: Tensor::new(vec![fan_out], gb.into_iter().map(|v| v as f32).collect())?,
        });
    }
    grads.reverse();
    Ok((loss, ParamSet { layers: grads }))
}

/// `p <- p - lr * g` on masked tensors (all tensors when `mask` is `None`).
pub fn sgd_step(
    params: &ParamSet,
    grads: &ParamSet,
    lr: f32,
    mask: Option<&SparseMask>,
) -> Result<ParamSet> {
    let mut out = params.clone();
    sgd_step_in_place(&mut out, grads, lr, mask)?;
    Ok(out)
}

pub fn sgd_step_in_place(
    params: &mut ParamSet,
    grads: &ParamSet,
    lr: f32,
    mask: Option<&SparseMask>,
) -> Result<()> {
    params.check_compatible(grads)?;
    if let Some(m) = mask {
        m.check_params(params)?;
    }
    if lr == 0.0 {
        return Ok(());
    }
    for l in 0..params.num_layers() {
        for unit in Unit::ALL {
            if mask.is_some_and(|m| !m.is_selected(l, unit)) {
                continue;
            }
            let g = grads.tensor(l, unit).data();
            for (p, &gv) in params.tensor_mut(l, unit).data_mut().iter_mut().zip(g) {
                *p -= lr * gv;
            }
        }
    }
    Ok(())
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// Accuracy and mean cross-entropy over every sample of `batches`.
pub fn evaluate<'a>(
    params: &ParamSet,
    batches: impl IntoIterator<Item = &'a Batch>,
) -> Result<Evaluation> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let mut loss_sum = 0.0;
    for batch in batches {
        check_batch(params, batch)?;
        let cache = forward_f64(params, batch);
        let classes = cache.logits().len() / batch.len();
        for r in 0..batch.len() {
            let row = &cache.logits()[r * classes..(r + 1) * classes];
            if argmax(row) == batch.labels[r] {
                correct += 1;
            }
            loss_sum += softmax_xent(row, batch.labels[r]).1;
        }
        total += batch.len();
    }
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / total as f64,
        mean_loss: loss_sum / total as f64,
    })
}
