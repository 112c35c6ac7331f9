//! RGB images in normalized `[-1, 1]` space and the geometric operations the
//! pipeline needs: centre crop, bilinear resize, region copy and the
//! chroma-key canvas.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Pure green `(0, 255, 0)` mapped through [`normalize_u8`].
pub const CHROMA_KEY: [f32; 3] = [-1.0, 1.0, -1.0];

/// 8-bit sample to normalized value: `v / 127.5 - 1`.
#[inline]
pub fn normalize_u8(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

/// Normalized value back to 8 bits, rounding half away from zero and
/// saturating outside `[-1, 1]`.
#[inline]
pub fn denormalize(v: f32) -> u8 {
    let scaled = (v + 1.0) * 127.5;
    if scaled.is_nan() {
        return 0;
    }
    libm::roundf(scaled).clamp(0.0, 255.0) as u8
}

/// A three-channel image whose every element lies in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor(Tensor<f32>);

impl ImageTensor {
    pub fn new(tensor: Tensor<f32>) -> Result<Self> {
        let shape = tensor.shape();
        if shape.c != 3 {
            return Err(Error::Shape { expected: Shape::new(3, shape.h, shape.w), actual: shape });
        }
        if let Some(bad) = tensor.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::precondition(alloc::format!(
                "image value {bad} outside [-1, 1]"
            )));
        }
        Ok(Self(tensor))
    }

    /// Wraps a tensor whose values are known to be in range; clamps anything
    /// that drifted by rounding.
    pub fn from_clamped(mut tensor: Tensor<f32>) -> Self {
        debug_assert_eq!(tensor.shape().c, 3);
        for v in tensor.data_mut() {
            *v = v.clamp(-1.0, 1.0);
        }
        Self(tensor)
    }

    /// Uniform image filled with one normalized colour.
    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Result<Self> {
        Self::new(Tensor::from_fn(Shape::new(3, height, width), |c, _, _| rgb[c]))
    }

    /// Square canvas filled with [`CHROMA_KEY`].
    pub fn chroma_canvas(size: usize) -> Self {
        Self(Tensor::from_fn(Shape::new(3, size, size), |c, _, _| CHROMA_KEY[c]))
    }

    /// Interleaved 8-bit RGB, row-major.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::precondition(alloc::format!(
                "{width}x{height} RGB buffer needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(Self(Tensor::from_fn(Shape::new(3, height, width), |c, y, x| {
            normalize_u8(rgb[(y * width + x) * 3 + c])
        })))
    }

    /// Interleaved 8-bit RGB, row-major.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let s = self.0.shape();
        let mut out = Vec::with_capacity(s.len());
        for y in 0..s.h {
            for x in 0..s.w {
                for c in 0..3 {
                    out.push(denormalize(self.0.get(c, y, x)));
                }
            }
        }
        out
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.0.shape().h
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.0.shape().w
    }

    #[inline]
    pub fn shape(&self) -> Shape {
        self.0.shape()
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        [self.0.get(0, y, x), self.0.get(1, y, x), self.0.get(2, y, x)]
    }

    pub fn as_tensor(&self) -> &Tensor<f32> {
        &self.0
    }

    pub fn into_tensor(self) -> Tensor<f32> {
        self.0
    }

    pub fn is_square(&self) -> bool {
        self.height() == self.width()
    }

    /// Largest centred square; odd leftovers put the extra row/column after
    /// the crop (offset is floored).
    pub fn centre_square(&self) -> Self {
        let side = self.height().min(self.width());
        let y = (self.height() - side) / 2;
        let x = (self.width() - side) / 2;
        self.crop(y, x, side, side)
    }

    pub fn crop(&self, y0: usize, x0: usize, height: usize, width: usize) -> Self {
        assert!(y0 + height <= self.height() && x0 + width <= self.width(), "crop out of bounds");
        Self(Tensor::from_fn(Shape::new(3, height, width), |c, y, x| self.0.get(c, y0 + y, x0 + x)))
    }

    /// Overwrites the region at `(y0, x0)` with `src`.
    pub fn paste(&mut self, src: &ImageTensor, y0: usize, x0: usize) {
        assert!(
            y0 + src.height() <= self.height() && x0 + src.width() <= self.width(),
            "paste out of bounds"
        );
        for c in 0..3 {
            for y in 0..src.height() {
                for x in 0..src.width() {
                    self.0.set(c, y0 + y, x0 + x, src.0.get(c, y, x));
                }
            }
        }
    }

    /// Bilinear resampling with half-pixel centres and edge clamping.
    ///
    /// A same-size resize is the identity and an exact halving averages
    /// each 2x2 block.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> Self {
        assert!(height > 0 && width > 0, "resize to empty image");
        let ys = sample_grid(self.height(), height);
        let xs = sample_grid(self.width(), width);
        let src = &self.0;
        let out = Tensor::from_fn(Shape::new(3, height, width), |c, oy, ox| {
            let (y0, y1, fy) = ys[oy];
            let (x0, x1, fx) = xs[ox];
            let top = src.get(c, y0, x0) * (1.0 - fx) + src.get(c, y0, x1) * fx;
            let bottom = src.get(c, y1, x0) * (1.0 - fx) + src.get(c, y1, x1) * fx;
            top * (1.0 - fy) + bottom * fy
        });
        Self::from_clamped(out)
    }

    /// Repeated exact halving down to `side`, finishing with one bilinear
    /// step when `side` is not reached by halving alone.
    pub fn downscale_to(&self, side: usize) -> Self {
        let mut img = self.clone();
        while img.height() / 2 >= side && img.height().is_multiple_of(2) && img.width().is_multiple_of(2) {
            img = img.resize_bilinear(img.height() / 2, img.width() / 2);
        }
        if img.height() != side || img.width() != side {
            img = img.resize_bilinear(side, side);
        }
        img
    }
}

fn sample_grid(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|o| {
            let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}
