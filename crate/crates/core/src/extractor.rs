//! Feature extractors that map an image to the vector FID statistics are
//! computed over.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::image::ImageTensor;
use crate::scalar::matmul;

pub trait FeatureExtractor {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Must return identical features for identical images.
    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>>;
}

/// Fixed Gaussian random projection of a `16 x 16` downscale of the image
/// to 64 features. Needs no external weights.
#[derive(Clone, Debug)]
pub struct PixelProjection {
    side: usize,
    dim: usize,
    /// Row-major `dim x (3 * side * side)`.
    matrix: Vec<f64>,
}

impl PixelProjection {
    pub const NAME: &'static str = "pixel-projection";
    pub const SEED: u64 = 0x5EED_F1D0;
    pub const SIDE: usize = 16;
    pub const DIM: usize = 64;

    pub fn new() -> Self {
        Self::with_params(Self::SIDE, Self::DIM, Self::SEED)
    }

    pub fn with_params(side: usize, dim: usize, seed: u64) -> Self {
        let inputs = 3 * side * side;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Normal::new(0.0, 1.0 / libm::sqrt(inputs as f64)).expect("positive std");
        let matrix = (0..dim * inputs).map(|_| dist.sample(&mut rng)).collect();
        Self { side, dim, matrix }
    }
}

impl Default for PixelProjection {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureExtractor for PixelProjection {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        let small = img.downscale_to(self.side);
        let pixels: Vec<f64> = small.as_tensor().data().iter().map(|&v| v as f64).collect();
        let mut out = alloc::vec![0.0; self.dim];
        matmul(self.dim, pixels.len(), 1, &self.matrix, false, &pixels, false, &mut out, false);
        Ok(out)
    }
}
