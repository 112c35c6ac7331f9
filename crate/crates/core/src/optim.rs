use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameters;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 2e-4, beta1: 0.5, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments<T> {
    pub name: String,
    pub m: Vec<T>,
    pub v: Vec<T>,
}

/// Adam with bias correction. Moment buffers are aligned with the
/// network's parameter visit order.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub steps: u64,
    pub moments: Vec<Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<P: Parameters<T>>(config: AdamConfig, net: &P) -> Self {
        let mut moments = Vec::new();
        net.visit("", &mut |name, p| {
            moments.push(Moments { name: name.into(), m: vec![T::zero(); p.len()], v: vec![T::zero(); p.len()] });
        });
        Self { config, steps: 0, moments }
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step<P: Parameters<T>>(&mut self, net: &mut P) -> Result<()> {
        self.steps += 1;
        let t = self.steps as i32;
        let c = self.config;
        let b1 = T::from_f64_lossy(c.beta1);
        let b2 = T::from_f64_lossy(c.beta2);
        let one = T::one();
        let step_size = T::from_f64_lossy(c.lr / (1.0 - libm::pow(c.beta1, t as f64)));
        let bias2_sqrt = T::from_f64_lossy(libm::sqrt(1.0 - libm::pow(c.beta2, t as f64)));
        let eps = T::from_f64_lossy(c.eps);
        let mut idx = 0;
        let mut mismatch = None;
        net.visit_mut("", &mut |name, p| {
            let Some(state) = self.moments.get_mut(idx) else {
                mismatch.get_or_insert_with(|| String::from(name));
                return;
            };
            idx += 1;
            if state.m.len() != p.len() || state.name != name {
                mismatch.get_or_insert_with(|| String::from(name));
                return;
            }
            for (((w, g), m), v) in p.value.iter_mut().zip(p.grad.iter_mut()).zip(&mut state.m).zip(&mut state.v) {
                *m = b1 * *m + (one - b1) * *g;
                *v = b2 * *v + (one - b2) * *g * *g;
                *w -= step_size * *m / ((*v).sqrt() / bias2_sqrt + eps);
                *g = T::zero();
            }
        });
        match mismatch {
            Some(name) => Err(Error::config(alloc::format!("optimizer state does not match parameter {name}"))),
            None if idx != self.moments.len() => Err(Error::config("optimizer has more states than parameters")),
            None => Ok(()),
        }
    }
}
