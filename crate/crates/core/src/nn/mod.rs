//! Minimal layer library with explicit, cache-based backpropagation.
//!
//! Every layer is immutable during `forward`/`backward`: the forward pass
//! returns a cache, and the backward pass accumulates parameter gradients into
//! caller-owned buffers. Gradient buffers are laid out in the same order as
//! [`Parameterized::params`].

mod activation;
mod conv;
mod norm;

pub use activation::{
    dropout_mask, leaky_relu, leaky_relu_backward, relu, relu_backward, sigmoid, sigmoid_backward, tanh, tanh_backward,
};
pub use conv::{Conv2d, ConvCache, ConvTranspose2d, ConvTransposeCache};
pub use norm::{InstanceNorm, NormCache};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

/// Owner of learnable parameter blocks, visited in a fixed order.
pub trait Parameterized<T: Scalar> {
    fn params(&self) -> Vec<&[T]>;
    fn params_mut(&mut self) -> Vec<&mut [T]>;

    /// Zeroed gradient buffers matching [`Parameterized::params`].
    fn zero_grads(&self) -> Grads<T> {
        Grads(self.params().iter().map(|p| vec![T::zero(); p.len()]).collect())
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }
}

/// Gradient buffers aligned with a network's parameter blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T>(pub Vec<Vec<T>>);

impl<T: Scalar> Grads<T> {
    pub fn scale(&mut self, s: T) {
        for g in &mut self.0 {
            g.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }
}

/// Draws `n` weights from N(0, std²).
pub(crate) fn normal_init<T: Scalar, R: Rng>(rng: &mut R, n: usize, std: f64) -> Vec<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    (0..n).map(|_| T::lit(dist.sample(rng))).collect()
}
