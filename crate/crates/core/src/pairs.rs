//! Construction of training pairs and generation inputs, plus the seeded
//! per-epoch visiting order.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::{ImageTensor, CHROMA_KEY};

/// Conditioning input (real centre, chroma border) and the full original.
#[derive(Clone, Debug, PartialEq)]
pub struct ExamplePair {
    pub input: ImageTensor,
    pub target: ImageTensor,
    pub source_id: String,
}

/// Side length and offset of the centre region of an `S x S` image.
#[inline]
pub fn centre_region(size: usize) -> (usize, usize) {
    (size / 2, size / 4)
}

fn check_square(img: &ImageTensor) -> Result<usize> {
    let s = img.height();
    if !img.is_square() || s == 0 || !s.is_multiple_of(4) {
        return Err(Error::precondition(alloc::format!(
            "expected a square image with side divisible by 4, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(s)
}

/// Keeps the centre `S/2 x S/2` of `img` at offset `(S/4, S/4)` and paints
/// everything else with the chroma key. The target is `img` itself.
pub fn make_training_pair(img: &ImageTensor, source_id: impl Into<String>) -> Result<ExamplePair> {
    let s = check_square(img)?;
    let (side, off) = centre_region(s);
    let mut input = ImageTensor::chroma_canvas(s);
    input.paste(&img.crop(off, off, side, side), off, off);
    Ok(ExamplePair { input, target: img.clone(), source_id: source_id.into() })
}

/// Shrinks the whole of `img` to `S/2 x S/2` and centres it on a chroma
/// canvas.
pub fn make_generation_input(img: &ImageTensor) -> Result<ImageTensor> {
    let s = check_square(img)?;
    let (side, off) = centre_region(s);
    let mut out = ImageTensor::chroma_canvas(s);
    out.paste(&img.resize_bilinear(side, side), off, off);
    Ok(out)
}

/// True when every pixel outside the centre region is exactly the chroma key.
pub fn border_is_chroma(img: &ImageTensor) -> bool {
    let s = img.height();
    let (side, off) = centre_region(s);
    (0..s).all(|y| {
        (0..s).all(|x| {
            let inside = (off..off + side).contains(&y) && (off..off + side).contains(&x);
            inside || img.pixel(y, x) == CHROMA_KEY
        })
    })
}

/// Visiting order of `n` items in `epoch`: a permutation that depends only
/// on `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
}

/// Deterministic subset of `min(n, k)` indices, returned in ascending order.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order = epoch_order(n, seed, u64::MAX);
    order.truncate(k.min(n));
    order.sort_unstable();
    order
}
