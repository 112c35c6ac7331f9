use alloc::vec::Vec;

use super::param::{join, Param, Parameters};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

const EPS: f64 = 1e-5;

/// Per-channel normalization over the spatial plane with a learned affine
/// transform. Statistics always come from the current sample, so train and
/// eval behave identically.
#[derive(Clone, Debug)]
pub struct InstanceNorm<T> {
    pub channels: usize,
    pub gamma: Param<T>,
    pub beta: Param<T>,
}

/// Normalized activations and per-channel inverse deviations of one forward pass.
#[derive(Clone, Debug)]
pub struct NormCache<T> {
    xhat: Tensor<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> InstanceNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: Param::filled(channels, T::one()),
            beta: Param::filled(channels, T::zero()),
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<(Tensor<T>, NormCache<T>)> {
        let s = x.shape();
        x.expect_shape(Shape::new(self.channels, s.h, s.w))?;
        let n = T::from_usize(s.plane()).expect("plane size");
        let eps = T::from_f64_lossy(EPS);
        let mut xhat = Tensor::zeros(s);
        let mut y = Tensor::zeros(s);
        let mut inv_std = Vec::with_capacity(self.channels);
        let plane = s.plane();
        for c in 0..self.channels {
            let src = x.channel(c);
            let mean = src.iter().copied().sum::<T>() / n;
            let var = src.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
            let inv = T::one() / (var + eps).sqrt();
            inv_std.push(inv);
            let (g, b) = (self.gamma.value[c], self.beta.value[c]);
            let xh = &mut xhat.data_mut()[c * plane..(c + 1) * plane];
            for (o, &v) in xh.iter_mut().zip(src) {
                *o = (v - mean) * inv;
            }
            let yc = &mut y.data_mut()[c * plane..(c + 1) * plane];
            for (o, &v) in yc.iter_mut().zip(xh.iter()) {
                *o = g * v + b;
            }
        }
        Ok((y, NormCache { xhat, inv_std }))
    }

    pub fn backward(&mut self, cache: &NormCache<T>, dy: &Tensor<T>, param_grads: bool) -> Tensor<T> {
        let s = dy.shape();
        let plane = s.plane();
        let n = T::from_usize(plane).expect("plane size");
        let mut dx = Tensor::zeros(s);
        for c in 0..self.channels {
            let g = dy.channel(c);
            let xh = cache.xhat.channel(c);
            let sum_g: T = g.iter().copied().sum();
            let sum_gx: T = g.iter().zip(xh).map(|(&a, &b)| a * b).sum();
            if param_grads {
                self.gamma.grad[c] += sum_gx;
                self.beta.grad[c] += sum_g;
            }
            let scale = self.gamma.value[c] * cache.inv_std[c] / n;
            let out = &mut dx.data_mut()[c * plane..(c + 1) * plane];
            for ((o, &gi), &xi) in out.iter_mut().zip(g).zip(xh) {
                *o = scale * (n * gi - sum_g - xi * sum_gx);
            }
        }
        dx
    }
}

impl<T: Scalar> Parameters<T> for InstanceNorm<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "gamma"), &self.gamma);
        f(&join(prefix, "beta"), &self.beta);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "gamma"), &mut self.gamma);
        f(&join(prefix, "beta"), &mut self.beta);
    }
}
