//! Sequential networks built from [`Layer`]s.

use super::layers::{Cache, Layer};
use super::scalar::Scalar;
use super::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Network<T> {
    name: String,
    layers: Vec<Layer<T>>,
}

/// Forward-pass record needed to backpropagate through a [`Network`].
#[derive(Debug)]
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(name: impl Into<String>, layers: Vec<Layer<T>>) -> Self {
        Network {
            name: name.into(),
            layers,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn forward(&self, x: Tensor<T>) -> Tensor<T> {
        self.layers.iter().fold(x, |x, l| l.forward(x, false).0)
    }

    pub fn forward_train(&self, mut x: Tensor<T>) -> (Tensor<T>, Tape<T>) {
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let (y, cache) = layer.forward(x, true);
            caches.push(cache);
            x = y;
        }
        (x, Tape { caches })
    }

    /// Backpropagates `grad` through the network, accumulating into `grads`
    /// (aligned with [`Network::params`]) and returning the input gradient.
    pub fn backward(&self, tape: &Tape<T>, mut grad: Tensor<T>, grads: &mut [Tensor<T>]) -> Tensor<T> {
        let mut offset = grads.len();
        for (layer, cache) in self.layers.iter().zip(&tape.caches).rev() {
            let count = layer.params().len();
            offset -= count;
            grad = layer.backward(cache, grad, &mut grads[offset..offset + count]);
        }
        grad
    }

    /// Named parameters in a stable order: `{network}.{layer index}.{kind}.{weight|bias}`.
    pub fn named_params(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (p, t) in ["weight", "bias"].iter().zip(layer.params()) {
                out.push((format!("{}.{i}.{}.{p}", self.name, layer.kind()), t));
            }
        }
        out
    }

    pub fn params(&self) -> Vec<&Tensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params().iter().map(|p| Tensor::zeros(p.shape())).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                Layer::Dense { weight, bias } => Layer::Dense {
                    weight: weight.cast(),
                    bias: bias.cast(),
                },
                Layer::Conv {
                    weight,
                    bias,
                    stride,
                } => Layer::Conv {
                    weight: weight.cast(),
                    bias: bias.cast(),
                    stride: *stride,
                },
                Layer::Deconv {
                    weight,
                    bias,
                    stride,
                } => Layer::Deconv {
                    weight: weight.cast(),
                    bias: bias.cast(),
                    stride: *stride,
                },
                Layer::Relu => Layer::Relu,
                Layer::LeakyRelu(s) => Layer::LeakyRelu(*s),
                Layer::Flatten => Layer::Flatten,
                Layer::Unflatten {
                    channels,
                    height,
                    width,
                } => Layer::Unflatten {
                    channels: *channels,
                    height: *height,
                    width: *width,
                },
                Layer::Broadcast { coords } => Layer::Broadcast {
                    coords: coords.clone(),
                },
                Layer::AppendCoords => Layer::AppendCoords,
            })
            .collect();
        Network {
            name: self.name.clone(),
            layers,
        }
    }
}
