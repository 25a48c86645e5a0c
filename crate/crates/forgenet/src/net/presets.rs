//! Desk-scale reference architectures with seeded initialization.

use super::{Layer, Model, ModelMeta};
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Hidden activation used between dense/conv layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Silu,
    Gelu,
}

impl Activation {
    fn layer(self) -> Layer {
        match self {
            Activation::Relu => Layer::Relu,
            Activation::Silu => Layer::Silu,
            Activation::Gelu => Layer::Gelu,
        }
    }
}

fn init_dense(rng: &mut ChaCha8Rng, out_dim: usize, in_dim: usize) -> Result<Layer> {
    let scale = 1.0 / (in_dim as f64).sqrt();
    let weight: Vec<f64> = (0..out_dim * in_dim)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Layer::dense(
        Tensor::matrix(out_dim, in_dim, weight),
        Tensor::zeros(vec![out_dim]),
    )
}

fn init_conv(
    rng: &mut ChaCha8Rng,
    out_c: usize,
    in_c: usize,
    k: usize,
    stride: usize,
    padding: usize,
) -> Result<Layer> {
    let fan_in = (in_c * k * k) as f64;
    let scale = 1.0 / fan_in.sqrt();
    let kernel: Vec<f64> = (0..out_c * in_c * k * k)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    Layer::conv2d(
        Tensor::new(vec![out_c, in_c, k, k], kernel),
        Tensor::zeros(vec![out_c]),
        stride,
        padding,
    )
}

/// Fully connected chain `dims[0] -> dims[1] -> ... -> dims.last()` with the
/// given activation between layers (none after the final one).
pub fn mlp(name: &str, dims: &[usize], activation: Activation, seed: u64) -> Result<Model> {
    if dims.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least input and output extents, got {dims:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::new();
    for w in dims.windows(2) {
        layers.push(init_dense(&mut rng, w[1], w[0])?);
        layers.push(activation.layer());
    }
    layers.pop(); // no activation after the logits layer
    Ok(Model::new(
        layers,
        ModelMeta {
            name: name.into(),
            input_shape: vec![dims[0]],
            classes: *dims.last().unwrap(),
            seed,
        },
    ))
}

/// 784-128-64-10 MLP over 1x28x28 inputs.
pub fn mlp_mnist(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        Layer::Flatten,
        init_dense(&mut rng, 128, 784).unwrap(),
        Layer::Relu,
        init_dense(&mut rng, 64, 128).unwrap(),
        Layer::Relu,
        init_dense(&mut rng, 10, 64).unwrap(),
    ];
    Model::new(
        layers,
        ModelMeta {
            name: "mlp-mnist".into(),
            input_shape: vec![1, 28, 28],
            classes: 10,
            seed,
        },
    )
}

/// Two-conv CNN over 1x28x28 inputs: 8 then 16 channels, dense head.
pub fn cnn_mnist(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = vec![
        init_conv(&mut rng, 8, 1, 3, 1, 1).unwrap(),
        Layer::Relu,
        init_conv(&mut rng, 16, 8, 3, 2, 1).unwrap(),
        Layer::Relu,
        Layer::Flatten,
        init_dense(&mut rng, 10, 16 * 14 * 14).unwrap(),
    ];
    Model::new(
        layers,
        ModelMeta {
            name: "cnn-mnist".into(),
            input_shape: vec![1, 28, 28],
            classes: 10,
            seed,
        },
    )
}

/// Small MLP for synthetic blob data.
pub fn mlp_blobs(dim: usize, classes: usize, seed: u64) -> Result<Model> {
    mlp("mlp-blobs", &[dim, 32, 16, classes], Activation::Relu, seed)
}

/// Single dense layer (a linear classifier).
pub fn linear(dim: usize, classes: usize, seed: u64) -> Result<Model> {
    mlp("linear", &[dim, classes], Activation::Relu, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_weights() {
        let a = mlp_blobs(4, 3, 11).unwrap();
        let b = mlp_blobs(4, 3, 11).unwrap();
        assert_eq!(a, b);
        let c = mlp_blobs(4, 3, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cnn_shapes_compose() {
        let model = cnn_mnist(3);
        let x = crate::tensor::Tensor::zeros(vec![2, 1, 28, 28]);
        let out = model.forward(&x).unwrap();
        assert_eq!(out.shape(), &[2, 10]);
    }
}
