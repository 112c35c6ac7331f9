//! Shrink-and-extend continuation of a finished image.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::generator::Generator;
use crate::image::ImageTensor;
use crate::pairs::{centre_region, make_generation_input};
use crate::scalar::Scalar;

/// Runs of at least this many exact chroma pixels on a border row count as
/// unfilled border.
pub const CHROMA_RUN_THRESHOLD: usize = 16;

/// Maps a chroma-bordered input to a full image.
pub trait Inpainter {
    fn inpaint(&self, input: &ImageTensor) -> Result<ImageTensor>;
}

impl<T: Scalar> Inpainter for Generator<T> {
    fn inpaint(&self, input: &ImageTensor) -> Result<ImageTensor> {
        let out = self.forward(&input.as_tensor().cast::<T>())?;
        Ok(ImageTensor::from_clamped(out.cast::<f32>()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationSeries {
    pub original: ImageTensor,
    /// One image per generation, oldest first.
    pub steps: Vec<ImageTensor>,
    pub paste_back: bool,
}

impl GenerationSeries {
    pub fn generations(&self) -> usize {
        self.steps.len()
    }

    /// `original` followed by every step.
    pub fn images(&self) -> impl Iterator<Item = &ImageTensor> {
        core::iter::once(&self.original).chain(&self.steps)
    }
}

/// One generation: shrink `img` to half size on a chroma canvas and let the
/// model fill the border. With `paste_back` the model's centre is replaced
/// by the shrunk original.
pub fn extend_once<G: Inpainter + ?Sized>(generator: &G, img: &ImageTensor, paste_back: bool) -> Result<ImageTensor> {
    let input = make_generation_input(img)?;
    let mut out = generator.inpaint(&input)?;
    if out.shape() != input.shape() {
        return Err(Error::Shape { expected: input.shape(), actual: out.shape() });
    }
    if paste_back {
        let (side, off) = centre_region(img.height());
        out.paste(&input.crop(off, off, side, side), off, off);
    }
    Ok(out)
}

pub fn extend_series<G: Inpainter + ?Sized>(
    generator: &G,
    img: &ImageTensor,
    generations: usize,
    paste_back: bool,
) -> Result<GenerationSeries> {
    if generations == 0 {
        return Err(Error::precondition("generations must be ≥ 1"));
    }
    let mut steps: Vec<ImageTensor> = Vec::with_capacity(generations);
    for _ in 0..generations {
        let prev = steps.last().unwrap_or(img);
        let next = extend_once(generator, prev, paste_back)?;
        steps.push(next);
    }
    Ok(GenerationSeries { original: img.clone(), steps, paste_back })
}

/// A horizontal run of exact `(0, 255, 0)` pixels in 8-bit space.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChromaRun {
    pub y: usize,
    pub x: usize,
    pub len: usize,
}

/// Every run of at least `min_len` chroma pixels on a row, restricted to
/// pixels outside the centre region. Pixels are compared after conversion
/// to 8 bits, so values within half a quantization step of the key count.
pub fn chroma_runs(img: &ImageTensor, min_len: usize) -> Vec<ChromaRun> {
    let s = img.height();
    let (side, off) = centre_region(s);
    let bytes = img.to_rgb8();
    let w = img.width();
    let is_key = |y: usize, x: usize| {
        let i = 3 * (y * w + x);
        bytes[i] == 0 && bytes[i + 1] == 255 && bytes[i + 2] == 0
    };
    let in_centre = |y: usize, x: usize| (off..off + side).contains(&y) && (off..off + side).contains(&x);
    let mut runs = Vec::new();
    for y in 0..s {
        let mut start = None;
        for x in 0..=w {
            let hit = x < w && !in_centre(y, x) && is_key(y, x);
            match (hit, start) {
                (true, None) => start = Some(x),
                (false, Some(x0)) => {
                    if x - x0 >= min_len {
                        runs.push(ChromaRun { y, x: x0, len: x - x0 });
                    }
                    start = None;
                }
                _ => {}
            }
        }
    }
    runs
}

/// True when no border row holds a chroma run of `CHROMA_RUN_THRESHOLD`.
pub fn border_filled(img: &ImageTensor) -> bool {
    chroma_runs(img, CHROMA_RUN_THRESHOLD).is_empty()
}
