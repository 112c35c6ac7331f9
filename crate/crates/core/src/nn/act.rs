use alloc::vec::Vec;

use rand::Rng;

use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub fn leaky_relu<T: Scalar>(x: &mut Tensor<T>, slope: T) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v *= slope;
        }
    }
}

/// Gradient through a leaky ReLU given its output; a positive slope keeps
/// the sign of the input.
pub fn leaky_relu_backward<T: Scalar>(out: &Tensor<T>, grad: &mut Tensor<T>, slope: T) {
    for (g, &y) in grad.data_mut().iter_mut().zip(out.data()) {
        if y < T::zero() {
            *g *= slope;
        }
    }
}

pub fn relu<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

pub fn relu_backward<T: Scalar>(out: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(out.data()) {
        if y <= T::zero() {
            *g = T::zero();
        }
    }
}

pub fn tanh<T: Scalar>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        *v = v.tanh();
    }
}

pub fn tanh_backward<T: Scalar>(out: &Tensor<T>, grad: &mut Tensor<T>) {
    for (g, &y) in grad.data_mut().iter_mut().zip(out.data()) {
        *g *= T::one() - y * y;
    }
}

/// Inverted-dropout multipliers: `0` with probability `rate`, otherwise
/// `1 / (1 - rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<T> {
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}
