use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { v * slope })
}

/// Gradient through leaky ReLU given the layer input.
pub fn leaky_relu_backward<T: Scalar>(input: &Tensor<T>, grad: &Tensor<T>, slope: T) -> Tensor<T> {
    input
        .zip_map(grad, |x, g| if x > T::zero() { g } else { g * slope })
        .expect("same dims")
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    input
        .zip_map(grad, |x, g| if x > T::zero() { g } else { T::zero() })
        .expect("same dims")
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

/// Gradient through tanh given the layer output.
pub fn tanh_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    output.zip_map(grad, |y, g| g * (T::one() - y * y)).expect("same dims")
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| T::one() / (T::one() + (-v).exp()))
}

/// Gradient through the logistic function given the layer output.
pub fn sigmoid_backward<T: Scalar>(output: &Tensor<T>, grad: &Tensor<T>) -> Tensor<T> {
    output.zip_map(grad, |y, g| g * y * (T::one() - y)).expect("same dims")
}

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar, R: Rng>(rng: &mut R, len: usize, rate: f64) -> Vec<T> {
    let keep = T::lit(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep })
        .collect()
}
