//! Conditional adversarial border reconstruction for artworks: the
//! networks, losses, optimizer, FID and the shrink-and-extend loop.
//!
//! Everything here is `no_std` with `alloc`; file formats, the corpus walk
//! and the command line live in the `artextend` crate.

#![no_std]
extern crate alloc;

pub mod arch;
pub mod discriminator;
pub mod error;
pub mod extractor;
pub mod fid;
pub mod generator;
pub mod image;
pub mod inception;
pub mod loss;
pub mod nn;
pub mod optim;
pub mod outpaint;
pub mod pairs;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use arch::{DiscriminatorConfig, GeneratorConfig, NormKind};
pub use discriminator::{Discriminator, PatchMap};
pub use error::{Error, Result};
pub use extractor::{FeatureExtractor, PixelProjection};
pub use fid::{evaluate_fid, feature_stats, frechet_distance, frechet_distance_report, FidStats, FrechetReport};
pub use generator::{Generator, GeneratorTrace, Mode};
pub use image::{denormalize, normalize_u8, ImageTensor, CHROMA_KEY};
pub use inception::{InceptionPool3, WeightSource};
pub use nn::Parameters;
pub use optim::{Adam, AdamConfig};
pub use outpaint::{border_filled, chroma_runs, extend_once, extend_series, GenerationSeries, Inpainter};
pub use pairs::{border_is_chroma, centre_region, epoch_order, make_generation_input, make_training_pair, sample_indices, ExamplePair};
pub use scalar::Scalar;
pub use tensor::{Shape, Tensor};
pub use train::{generator_gradients, LossRecord, TrainConfig, TrainState};

/// Number of scalar parameters in a network.
pub fn count_parameters<T: Scalar, P: Parameters<T>>(net: &P) -> usize {
    net.parameter_count()
}
