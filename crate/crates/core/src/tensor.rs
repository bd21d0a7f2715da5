//! Parameter containers: [`Tensor`], [`ModelSpec`], [`ParamSet`] and [`Batch`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f32` array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) {
            return Err(Error::Shape(format!("invalid shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite value at index {i}")));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Shape of a ReLU MLP with a softmax output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// `[input, hidden..., classes]`.
    pub layer_dims: Vec<usize>,
    pub init_seed: u64,
}

impl ModelSpec {
    pub fn new(layer_dims: Vec<usize>, init_seed: u64) -> Result<Self> {
        let spec = ModelSpec {
            layer_dims,
            init_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least input and output dims, got {:?}",
                self.layer_dims
            )));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "zero-width layer in {:?}",
                self.layer_dims
            )));
        }
        Ok(())
    }

    /// Number of dense layers.
    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    /// `(fan_in, fan_out)` of dense layer `l`.
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.layer_dims[l], self.layer_dims[l + 1])
    }

    pub fn layer_name(l: usize) -> String {
        format!("fc{l}")
    }

    pub fn total_params(&self) -> usize {
        (0..self.num_layers())
            .map(|l| {
                let (i, o) = self.layer_shape(l);
                i * o + o
            })
            .sum()
    }
}

/// One dense layer: `weights` is `[fan_in, fan_out]`, `bias` is `[fan_out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Which tensor of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    Weights,
    Bias,
}

impl Unit {
    pub const ALL: [Unit; 2] = [Unit::Weights, Unit::Bias];

    pub fn suffix(self) -> &'static str {
        match self {
            Unit::Weights => "weight",
            Unit::Bias => "bias",
        }
    }
}

/// Ordered list of layer tensors; the unit of aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    pub layers: Vec<Layer>,
}

impl ParamSet {
    pub fn zeros(spec: &ModelSpec) -> Self {
        let layers = (0..spec.num_layers())
            .map(|l| {
                let (i, o) = spec.layer_shape(l);
                Layer {
                    name: ModelSpec::layer_name(l),
                    weights: Tensor::zeros(vec![i, o]),
                    bias: Tensor::zeros(vec![o]),
                }
            })
            .collect();
        ParamSet { layers }
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn tensor(&self, layer: usize, unit: Unit) -> &Tensor {
        match unit {
            Unit::Weights => &self.layers[layer].weights,
            Unit::Bias => &self.layers[layer].bias,
        }
    }

    pub fn tensor_mut(&mut self, layer: usize, unit: Unit) -> &mut Tensor {
        match unit {
            Unit::Weights => &mut self.layers[layer].weights,
            Unit::Bias => &mut self.layers[layer].bias,
        }
    }

    pub fn num_values(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Layer dims implied by the tensor shapes.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        if let Some(first) = self.layers.first() {
            dims.push(first.weights.shape()[0]);
        }
        dims.extend(self.layers.iter().map(|l| l.weights.shape()[1]));
        dims
    }

    /// Errors unless `other` has the same layer names and shapes.
    pub fn check_compatible(&self, other: &ParamSet) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Shape(format!(
                "{} layers vs {}",
                self.layers.len(),
                other.layers.len()
            )));
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.name != b.name
                || a.weights.shape() != b.weights.shape()
                || a.bias.shape() != b.bias.shape()
            {
                return Err(Error::Shape(format!(
                    "layer {} {:?}/{:?} vs {} {:?}/{:?}",
                    a.name,
                    a.weights.shape(),
                    a.bias.shape(),
                    b.name,
                    b.weights.shape(),
                    b.bias.shape()
                )));
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.is_finite())
    }
}

/// Mini-batch: `inputs` is `[b, d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if inputs.shape().len() != 2 || inputs.shape()[0] != labels.len() {
            return Err(Error::Shape(format!(
                "batch inputs {:?} with {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        Ok(Batch { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.shape()[1]
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.inputs.data()[i * d..(i + 1) * d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0], vec![]).is_err());
        assert!(Tensor::new(vec![1], vec![f32::NAN]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![1.0; 6]).is_ok());
    }

    #[test]
    fn spec_counts() {
        let spec = ModelSpec::new(vec![4, 3, 2], 0).unwrap();
        assert_eq!(spec.total_params(), 23);
        assert_eq!(spec.num_layers(), 2);
        assert!(ModelSpec::new(vec![4], 0).is_err());
        assert!(ModelSpec::new(vec![4, 0, 2], 0).is_err());
    }

    #[test]
    fn zeros_layout_matches_spec() {
        let spec = ModelSpec::new(vec![5, 4, 3], 0).unwrap();
        let p = ParamSet::zeros(&spec);
        assert_eq!(p.layer_dims(), vec![5, 4, 3]);
        assert_eq!(p.num_values(), spec.total_params());
        assert_eq!(p.layers[1].name, "fc1");
    }
}
