use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::Scalar;

/// A trainable tensor and its accumulated gradient, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn filled(len: usize, v: T) -> Self {
        Self { value: vec![v; len], grad: vec![T::zero(); len] }
    }

    pub fn normal<R: Rng + ?Sized>(len: usize, mean: f64, std: f64, rng: &mut R) -> Self {
        let dist = Normal::new(mean, std).expect("finite std");
        let value = (0..len).map(|_| T::from_f64_lossy(dist.sample(rng))).collect();
        Self { value, grad: vec![T::zero(); len] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Named traversal over the trainable parameters of a network.
///
/// Visit order is fixed by construction and is what optimizer state and
/// checkpoints are aligned to.
pub trait Parameters<T: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>));

    fn parameter_count(&self) -> usize {
        let mut n = 0;
        self.visit("", &mut |_, p| n += p.value.len());
        n
    }

    fn zero_grad(&mut self) {
        self.visit_mut("", &mut |_, p| p.zero_grad());
    }
}

pub fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        alloc::format!("{prefix}.{name}")
    }
}
