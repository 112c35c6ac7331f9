//! Adversarial and reconstruction losses. Expectations are empirical means
//! over patches (adversarial terms) or elements (L1), accumulated in `f64`.

use crate::discriminator::PatchMap;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Numerically stable `-[t ln s(x) + (1-t) ln(1-s(x))]`.
#[inline]
fn bce_with_logits(x: f64, target: f64) -> f64 {
    x.max(0.0) - x * target + libm::log1p(libm::exp(-x.abs()))
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

fn mean_bce<T: Scalar>(logits: &PatchMap<T>, target: f64) -> f64 {
    let xs = logits.logits();
    xs.iter().map(|v| bce_with_logits(v.as_f64(), target)).sum::<f64>() / xs.len() as f64
}

/// Gradient of the mean cross-entropy against `target` w.r.t. each logit.
pub fn bce_grad<T: Scalar>(logits: &PatchMap<T>, target: f64) -> Tensor<T> {
    let n = logits.logits().len() as f64;
    logits.as_tensor().map(|v| T::from_f64_lossy((sigmoid(v.as_f64()) - target) / n))
}

/// Discriminator objective: mean cross-entropy of real patches against
/// label 1 plus that of fake patches against label 0.
pub fn discriminator_loss<T: Scalar>(real: &PatchMap<T>, fake: &PatchMap<T>) -> Result<f64> {
    if real.as_tensor().shape() != fake.as_tensor().shape() {
        return Err(Error::Shape { expected: real.as_tensor().shape(), actual: fake.as_tensor().shape() });
    }
    Ok(mean_bce(real, 1.0) + mean_bce(fake, 0.0))
}

/// Non-saturating generator objective: mean cross-entropy of fake patches
/// against label 1.
pub fn generator_adversarial_loss<T: Scalar>(fake: &PatchMap<T>) -> f64 {
    mean_bce(fake, 1.0)
}

/// Mean absolute elementwise difference.
pub fn l1_loss<T: Scalar>(generated: &Tensor<T>, target: &Tensor<T>) -> Result<f64> {
    target.expect_shape(generated.shape())?;
    let sum: f64 = generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| (a.as_f64() - b.as_f64()).abs())
        .sum();
    Ok(sum / generated.data().len() as f64)
}

/// Subgradient of [`l1_loss`] w.r.t. `generated`, scaled by `weight`; zero
/// where the two agree.
pub fn l1_grad<T: Scalar>(generated: &Tensor<T>, target: &Tensor<T>, weight: f64) -> Result<Tensor<T>> {
    target.expect_shape(generated.shape())?;
    let step = T::from_f64_lossy(weight / generated.data().len() as f64);
    let data = generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(&a, &b)| {
            if a > b {
                step
            } else if a < b {
                -step
            } else {
                T::zero()
            }
        })
        .collect();
    Tensor::from_vec(generated.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;
    use core::f64::consts::LN_2;

    #[test]
    fn zero_logits() {
        let z = PatchMap::<f32>::full(2, 2, 0.0);
        assert!((discriminator_loss(&z, &z).unwrap() - 2.0 * LN_2).abs() < 1e-12);
        assert!((generator_adversarial_loss(&z) - LN_2).abs() < 1e-12);
    }

    #[test]
    fn perfect_discriminator_has_near_zero_loss() {
        let real = PatchMap::<f32>::full(3, 3, 40.0);
        let fake = PatchMap::<f32>::full(3, 3, -40.0);
        assert!(discriminator_loss(&real, &fake).unwrap() < 1e-12);
        assert!(generator_adversarial_loss(&real) < 1e-12);
    }

    #[test]
    fn large_logits_do_not_overflow() {
        let real = PatchMap::<f64>::full(1, 1, -800.0);
        assert!((generator_adversarial_loss(&real) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let a = PatchMap::<f32>::full(2, 2, 0.0);
        let b = PatchMap::<f32>::full(3, 3, 0.0);
        assert!(discriminator_loss(&a, &b).is_err());
        let t = Tensor::<f32>::zeros(Shape::new(3, 2, 2));
        let u = Tensor::<f32>::zeros(Shape::new(3, 2, 3));
        assert!(l1_loss(&t, &u).is_err());
    }

    #[test]
    fn l1_constant_offset() {
        let target = Tensor::<f32>::full(Shape::new(3, 4, 4), 0.0);
        let gen = Tensor::<f32>::full(Shape::new(3, 4, 4), 0.5);
        assert!((l1_loss(&gen, &target).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(l1_loss(&target, &target).unwrap(), 0.0);
    }

    #[test]
    fn bce_grad_matches_finite_differences() {
        let logits = PatchMap::<f64>::from_vec(1, 3, alloc::vec![-2.0, 0.3, 1.7]).unwrap();
        let g = bce_grad(&logits, 1.0);
        let h = 1e-6;
        for i in 0..3 {
            let mut up = logits.logits().to_vec();
            up[i] += h;
            let mut down = logits.logits().to_vec();
            down[i] -= h;
            let fd = (generator_adversarial_loss(&PatchMap::from_vec(1, 3, up).unwrap())
                - generator_adversarial_loss(&PatchMap::from_vec(1, 3, down).unwrap()))
                / (2.0 * h);
            assert!((fd - g.data()[i]).abs() < 1e-8);
        }
    }
}
