#![allow(dead_code)]

use artextend_core::{DiscriminatorConfig, GeneratorConfig, ImageTensor, NormKind, Shape, Tensor};

/// Four-level generator on 32x32 inputs with a handful of filters.
pub fn tiny_generator(norm: NormKind) -> GeneratorConfig {
    GeneratorConfig {
        resolution: 32,
        down_filters: vec![4, 8, 8, 8],
        up_filters: vec![8, 8, 4],
        kernel: 4,
        stride: 2,
        dropout_rate: 0.5,
        dropout_blocks: 2,
        norm,
    }
}

pub fn tiny_discriminator(norm: NormKind) -> DiscriminatorConfig {
    DiscriminatorConfig { down_filters: vec![4, 8, 8], head_filters: 8, norm, ..DiscriminatorConfig::default() }
}

/// Smooth deterministic colour field; `k` varies the pattern.
pub fn painting(size: usize, k: usize) -> ImageTensor {
    let kf = k as f32;
    let t = Tensor::from_fn(Shape::new(3, size, size), |c, y, x| {
        let (u, v) = (y as f32 / size as f32, x as f32 / size as f32);
        let phase = 0.7 * kf + 1.3 * c as f32;
        (0.6 * (6.0 * u + phase).sin() * (4.0 * v - 0.5 * kf).cos() + 0.3 * (u - v) * (c as f32 - 1.0)).clamp(-1.0, 1.0)
    });
    ImageTensor::new(t).unwrap()
}
