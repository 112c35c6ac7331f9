//! Inception-v3 pool3 features in the variant used for FID, evaluated in
//! inference mode from externally supplied weights.
//!
//! Tensor names follow the widely distributed PyTorch FID checkpoint
//! (`Conv2d_1a_3x3.conv.weight`, `Mixed_5b.branch1x1.bn.running_mean`, ...).
//! Batch normalization (eps 0.001) is folded into a per-channel affine map
//! at load time.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::extractor::FeatureExtractor;
use crate::image::ImageTensor;
use crate::nn::{Conv2d, ConvGeom, Param};
use crate::tensor::{Shape, Tensor};

pub const INPUT_SIDE: usize = 299;
pub const FEATURE_DIM: usize = 2048;
const BN_EPS: f32 = 0.001;

/// Provider of named `f32` tensors.
pub trait WeightSource {
    /// The flat tensor called `name`; its element count must equal the
    /// product of `shape`.
    fn tensor(&self, name: &str, shape: &[usize]) -> Result<Vec<f32>>;
}

/// Convolution without bias, folded batch norm, ReLU.
#[derive(Clone, Debug)]
struct BasicConv {
    conv: Conv2d<f32>,
    scale: Vec<f32>,
    shift: Vec<f32>,
}

impl BasicConv {
    fn load<W: WeightSource + ?Sized>(
        src: &W,
        name: &str,
        in_c: usize,
        out_c: usize,
        geom: ConvGeom,
    ) -> Result<Self> {
        let get = |suffix: &str, shape: &[usize]| src.tensor(&alloc::format!("{name}.{suffix}"), shape);
        let weight = get("conv.weight", &[out_c, in_c, geom.kh, geom.kw])?;
        let gamma = get("bn.weight", &[out_c])?;
        let beta = get("bn.bias", &[out_c])?;
        let mean = get("bn.running_mean", &[out_c])?;
        let var = get("bn.running_var", &[out_c])?;
        let scale: Vec<f32> = gamma.iter().zip(&var).map(|(g, v)| g / libm::sqrtf(v + BN_EPS)).collect();
        let shift = beta.iter().zip(&mean).zip(&scale).map(|((b, m), s)| b - m * s).collect();
        let conv = Conv2d {
            in_c,
            out_c,
            geom,
            weight: Param { grad: Vec::new(), value: weight },
            bias: None,
        };
        Ok(Self { conv, scale, shift })
    }

    fn forward(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut y = self.conv.forward(x)?;
        let plane = y.shape().plane();
        for (c, chunk) in y.data_mut().chunks_mut(plane).enumerate() {
            let (s, b) = (self.scale[c], self.shift[c]);
            for v in chunk {
                *v = (*v * s + b).max(0.0);
            }
        }
        Ok(y)
    }
}

fn k(size: usize) -> ConvGeom {
    ConvGeom::square(size, 1, 0)
}

fn k_pad(size: usize, pad: usize) -> ConvGeom {
    ConvGeom::square(size, 1, pad)
}

fn k_stride2(size: usize) -> ConvGeom {
    ConvGeom::square(size, 2, 0)
}

fn one_by_n(n: usize) -> ConvGeom {
    ConvGeom { kh: 1, kw: n, stride: 1, pad_h: 0, pad_w: n / 2 }
}

fn n_by_one(n: usize) -> ConvGeom {
    ConvGeom { kh: n, kw: 1, stride: 1, pad_h: n / 2, pad_w: 0 }
}

fn max_pool(x: &Tensor<f32>, size: usize, stride: usize, pad: usize) -> Tensor<f32> {
    pool(x, size, stride, pad, |vals| vals.iter().copied().fold(f32::NEG_INFINITY, f32::max))
}

/// Average over in-bounds taps only (padding excluded from the divisor).
fn avg_pool(x: &Tensor<f32>, size: usize, stride: usize, pad: usize) -> Tensor<f32> {
    pool(x, size, stride, pad, |vals| vals.iter().sum::<f32>() / vals.len() as f32)
}

fn pool(x: &Tensor<f32>, size: usize, stride: usize, pad: usize, reduce: impl Fn(&[f32]) -> f32) -> Tensor<f32> {
    let s = x.shape();
    let oh = (s.h + 2 * pad - size) / stride + 1;
    let ow = (s.w + 2 * pad - size) / stride + 1;
    let mut taps = Vec::with_capacity(size * size);
    Tensor::from_fn(Shape::new(s.c, oh, ow), |c, oy, ox| {
        taps.clear();
        for ky in 0..size {
            for kx in 0..size {
                let iy = (oy * stride + ky) as isize - pad as isize;
                let ix = (ox * stride + kx) as isize - pad as isize;
                if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                    taps.push(x.get(c, iy as usize, ix as usize));
                }
            }
        }
        reduce(&taps)
    })
}

fn concat(parts: Vec<Tensor<f32>>) -> Result<Tensor<f32>> {
    let mut iter = parts.into_iter();
    let mut acc = iter.next().expect("at least one branch");
    for p in iter {
        acc = Tensor::concat_channels(&acc, &p)?;
    }
    Ok(acc)
}

#[derive(Clone, Debug)]
enum Mixed {
    A { b1: BasicConv, b5: [BasicConv; 2], b3: [BasicConv; 3], pool: BasicConv },
    B { b3: BasicConv, b3dbl: [BasicConv; 3] },
    C { b1: BasicConv, b7: [BasicConv; 3], b7dbl: [BasicConv; 5], pool: BasicConv },
    D { b3: [BasicConv; 2], b7x3: [BasicConv; 4] },
    E { b1: BasicConv, b3: BasicConv, b3a: BasicConv, b3b: BasicConv, dbl: [BasicConv; 2], dbla: BasicConv, dblb: BasicConv, pool: BasicConv, max_pool: bool },
}

impl Mixed {
    fn a<W: WeightSource + ?Sized>(w: &W, name: &str, in_c: usize, pool_features: usize) -> Result<Self> {
        let n = |b: &str| -> String { alloc::format!("{name}.{b}") };
        Ok(Mixed::A {
            b1: BasicConv::load(w, &n("branch1x1"), in_c, 64, k(1))?,
            b5: [
                BasicConv::load(w, &n("branch5x5_1"), in_c, 48, k(1))?,
                BasicConv::load(w, &n("branch5x5_2"), 48, 64, k_pad(5, 2))?,
            ],
            b3: [
                BasicConv::load(w, &n("branch3x3dbl_1"), in_c, 64, k(1))?,
                BasicConv::load(w, &n("branch3x3dbl_2"), 64, 96, k_pad(3, 1))?,
                BasicConv::load(w, &n("branch3x3dbl_3"), 96, 96, k_pad(3, 1))?,
            ],
            pool: BasicConv::load(w, &n("branch_pool"), in_c, pool_features, k(1))?,
        })
    }

    fn b<W: WeightSource + ?Sized>(w: &W, name: &str, in_c: usize) -> Result<Self> {
        let n = |b: &str| -> String { alloc::format!("{name}.{b}") };
        Ok(Mixed::B {
            b3: BasicConv::load(w, &n("branch3x3"), in_c, 384, k_stride2(3))?,
            b3dbl: [
                BasicConv::load(w, &n("branch3x3dbl_1"), in_c, 64, k(1))?,
                BasicConv::load(w, &n("branch3x3dbl_2"), 64, 96, k_pad(3, 1))?,
                BasicConv::load(w, &n("branch3x3dbl_3"), 96, 96, k_stride2(3))?,
            ],
        })
    }

    fn c<W: WeightSource + ?Sized>(w: &W, name: &str, in_c: usize, c7: usize) -> Result<Self> {
        let n = |b: &str| -> String { alloc::format!("{name}.{b}") };
        Ok(Mixed::C {
            b1: BasicConv::load(w, &n("branch1x1"), in_c, 192, k(1))?,
            b7: [
                BasicConv::load(w, &n("branch7x7_1"), in_c, c7, k(1))?,
                BasicConv::load(w, &n("branch7x7_2"), c7, c7, one_by_n(7))?,
                BasicConv::load(w, &n("branch7x7_3"), c7, 192, n_by_one(7))?,
            ],
            b7dbl: [
                BasicConv::load(w, &n("branch7x7dbl_1"), in_c, c7, k(1))?,
                BasicConv::load(w, &n("branch7x7dbl_2"), c7, c7, n_by_one(7))?,
                BasicConv::load(w, &n("branch7x7dbl_3"), c7, c7, one_by_n(7))?,
                BasicConv::load(w, &n("branch7x7dbl_4"), c7, c7, n_by_one(7))?,
                BasicConv::load(w, &n("branch7x7dbl_5"), c7, 192, one_by_n(7))?,
            ],
            pool: BasicConv::load(w, &n("branch_pool"), in_c, 192, k(1))?,
        })
    }

    fn d<W: WeightSource + ?Sized>(w: &W, name: &str, in_c: usize) -> Result<Self> {
        let n = |b: &str| -> String { alloc::format!("{name}.{b}") };
        Ok(Mixed::D {
            b3: [
                BasicConv::load(w, &n("branch3x3_1"), in_c, 192, k(1))?,
                BasicConv::load(w, &n("branch3x3_2"), 192, 320, k_stride2(3))?,
            ],
            b7x3: [
                BasicConv::load(w, &n("branch7x7x3_1"), in_c, 192, k(1))?,
                BasicConv::load(w, &n("branch7x7x3_2"), 192, 192, one_by_n(7))?,
                BasicConv::load(w, &n("branch7x7x3_3"), 192, 192, n_by_one(7))?,
                BasicConv::load(w, &n("branch7x7x3_4"), 192, 192, k_stride2(3))?,
            ],
        })
    }

    fn e<W: WeightSource + ?Sized>(w: &W, name: &str, in_c: usize, max_pool: bool) -> Result<Self> {
        let n = |b: &str| -> String { alloc::format!("{name}.{b}") };
        Ok(Mixed::E {
            b1: BasicConv::load(w, &n("branch1x1"), in_c, 320, k(1))?,
            b3: BasicConv::load(w, &n("branch3x3_1"), in_c, 384, k(1))?,
            b3a: BasicConv::load(w, &n("branch3x3_2a"), 384, 384, one_by_n(3))?,
            b3b: BasicConv::load(w, &n("branch3x3_2b"), 384, 384, n_by_one(3))?,
            dbl: [
                BasicConv::load(w, &n("branch3x3dbl_1"), in_c, 448, k(1))?,
                BasicConv::load(w, &n("branch3x3dbl_2"), 448, 384, k_pad(3, 1))?,
            ],
            dbla: BasicConv::load(w, &n("branch3x3dbl_3a"), 384, 384, one_by_n(3))?,
            dblb: BasicConv::load(w, &n("branch3x3dbl_3b"), 384, 384, n_by_one(3))?,
            pool: BasicConv::load(w, &n("branch_pool"), in_c, 192, k(1))?,
            max_pool,
        })
    }

    fn chain(convs: &[BasicConv], x: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut h = convs[0].forward(x)?;
        for c in &convs[1..] {
            h = c.forward(&h)?;
        }
        Ok(h)
    }

    fn forward(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self {
            Mixed::A { b1, b5, b3, pool } => concat(vec![
                b1.forward(x)?,
                Self::chain(b5, x)?,
                Self::chain(b3, x)?,
                pool.forward(&avg_pool(x, 3, 1, 1))?,
            ]),
            Mixed::B { b3, b3dbl } => {
                concat(vec![b3.forward(x)?, Self::chain(b3dbl, x)?, max_pool(x, 3, 2, 0)])
            }
            Mixed::C { b1, b7, b7dbl, pool } => concat(vec![
                b1.forward(x)?,
                Self::chain(b7, x)?,
                Self::chain(b7dbl, x)?,
                pool.forward(&avg_pool(x, 3, 1, 1))?,
            ]),
            Mixed::D { b3, b7x3 } => {
                concat(vec![Self::chain(b3, x)?, Self::chain(b7x3, x)?, max_pool(x, 3, 2, 0)])
            }
            Mixed::E { b1, b3, b3a, b3b, dbl, dbla, dblb, pool, max_pool: use_max } => {
                let h3 = b3.forward(x)?;
                let hd = Self::chain(dbl, x)?;
                let pooled = if *use_max { max_pool(x, 3, 1, 1) } else { avg_pool(x, 3, 1, 1) };
                concat(vec![
                    b1.forward(x)?,
                    b3a.forward(&h3)?,
                    b3b.forward(&h3)?,
                    dbla.forward(&hd)?,
                    dblb.forward(&hd)?,
                    pool.forward(&pooled)?,
                ])
            }
        }
    }
}

/// Inception-v3 trunk up to the global average pool.
#[derive(Clone, Debug)]
pub struct InceptionPool3 {
    stem: Vec<BasicConv>,
    mixed: Vec<Mixed>,
}

impl InceptionPool3 {
    pub const NAME: &'static str = "inception-pool3";

    pub fn load<W: WeightSource + ?Sized>(w: &W) -> Result<Self> {
        let stem = vec![
            BasicConv::load(w, "Conv2d_1a_3x3", 3, 32, k_stride2(3))?,
            BasicConv::load(w, "Conv2d_2a_3x3", 32, 32, k(3))?,
            BasicConv::load(w, "Conv2d_2b_3x3", 32, 64, k_pad(3, 1))?,
            BasicConv::load(w, "Conv2d_3b_1x1", 64, 80, k(1))?,
            BasicConv::load(w, "Conv2d_4a_3x3", 80, 192, k(3))?,
        ];
        let mixed = vec![
            Mixed::a(w, "Mixed_5b", 192, 32)?,
            Mixed::a(w, "Mixed_5c", 256, 64)?,
            Mixed::a(w, "Mixed_5d", 288, 64)?,
            Mixed::b(w, "Mixed_6a", 288)?,
            Mixed::c(w, "Mixed_6b", 768, 128)?,
            Mixed::c(w, "Mixed_6c", 768, 160)?,
            Mixed::c(w, "Mixed_6d", 768, 160)?,
            Mixed::c(w, "Mixed_6e", 768, 192)?,
            Mixed::d(w, "Mixed_7a", 768)?,
            Mixed::e(w, "Mixed_7b", 1280, false)?,
            Mixed::e(w, "Mixed_7c", 2048, true)?,
        ];
        Ok(Self { stem, mixed })
    }

    /// Pool3 features of an image resized (bilinear) to 299x299.
    pub fn features(&self, img: &ImageTensor) -> Result<Vec<f32>> {
        let x = img.resize_bilinear(INPUT_SIDE, INPUT_SIDE).into_tensor();
        let mut h = self.stem[0].forward(&x)?;
        h = self.stem[1].forward(&h)?;
        h = self.stem[2].forward(&h)?;
        h = max_pool(&h, 3, 2, 0);
        h = self.stem[3].forward(&h)?;
        h = self.stem[4].forward(&h)?;
        h = max_pool(&h, 3, 2, 0);
        for m in &self.mixed {
            h = m.forward(&h)?;
        }
        let plane = h.shape().plane() as f32;
        let out: Vec<f32> = (0..h.shape().c).map(|c| h.channel(c).iter().sum::<f32>() / plane).collect();
        if out.len() != FEATURE_DIM {
            return Err(Error::Weights(alloc::format!("expected {FEATURE_DIM} features, got {}", out.len())));
        }
        Ok(out)
    }
}

impl FeatureExtractor for InceptionPool3 {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        FEATURE_DIM
    }

    fn extract(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        Ok(self.features(img)?.into_iter().map(f64::from).collect())
    }
}
