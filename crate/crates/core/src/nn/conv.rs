use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::param::{join, Param, Parameters};
use crate::error::{Error, Result};
use crate::scalar::{matmul, Scalar};
use crate::tensor::{Shape, Tensor};

/// Kernel, stride and zero padding of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvGeom {
    pub const fn square(k: usize, stride: usize, pad: usize) -> Self {
        Self { kh: k, kw: k, stride, pad_h: pad, pad_w: pad }
    }

    /// Output extent of a convolution over an `h x w` input, if non-empty.
    pub fn out_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let ph = h + 2 * self.pad_h;
        let pw = w + 2 * self.pad_w;
        if ph < self.kh || pw < self.kw {
            return None;
        }
        Some(((ph - self.kh) / self.stride + 1, (pw - self.kw) / self.stride + 1))
    }

    /// Output extent of the transposed convolution over an `h x w` input.
    pub fn transposed_out_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let oh = ((h - 1) * self.stride + self.kh).checked_sub(2 * self.pad_h)?;
        let ow = ((w - 1) * self.stride + self.kw).checked_sub(2 * self.pad_w)?;
        (oh > 0 && ow > 0).then_some((oh, ow))
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_h == 0 && self.pad_w == 0
    }
}

/// Unfolds `x` (`c x h x w`) into a `(c*kh*kw) x (oh*ow)` patch matrix.
pub fn im2col<T: Scalar>(
    x: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
) -> Vec<T> {
    let p = oh * ow;
    let mut cols = vec![T::zero(); c * g.kh * g.kw * p];
    let mut row = 0;
    for ci in 0..c {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                    let out = &mut dst[oy * ow..(oy + 1) * ow];
                    for (ox, o) in out.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                        if ix >= 0 && ix < w as isize {
                            *o = src[ix as usize];
                        }
                    }
                }
                row += 1;
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch columns back onto a `c x h x w`
/// plane, summing overlaps into `x`.
#[allow(clippy::too_many_arguments)]
pub fn col2im<T: Scalar>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    oh: usize,
    ow: usize,
    x: &mut [T],
) {
    let p = oh * ow;
    let mut row = 0;
    for ci in 0..c {
        let plane = &mut x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, &v) in src[oy * ow..(oy + 1) * ow].iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                        if ix >= 0 && ix < w as isize {
                            dst[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_bias_grad<T: Scalar>(grad: &mut [T], dy: &[T], plane: usize) {
    for (g, chunk) in grad.iter_mut().zip(dy.chunks(plane)) {
        *g += chunk.iter().copied().sum::<T>();
    }
}

/// Convolution with weight layout `[out_c, in_c, kh, kw]`.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub geom: ConvGeom,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_c: usize,
        out_c: usize,
        geom: ConvGeom,
        bias: bool,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = Param::normal(out_c * in_c * geom.kh * geom.kw, 0.0, init_std, rng);
        let bias = bias.then(|| Param::filled(out_c, T::zero()));
        Self { in_c, out_c, geom, weight, bias }
    }

    pub fn out_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_c {
            return Err(Error::Shape {
                expected: Shape::new(self.in_c, input.h, input.w),
                actual: input,
            });
        }
        let (oh, ow) = self.geom.out_size(input.h, input.w).ok_or_else(|| {
            Error::precondition(alloc::format!("input {input} smaller than the kernel"))
        })?;
        Ok(Shape::new(self.out_c, oh, ow))
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.geom.kh * self.geom.kw
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        let out = self.out_shape(s)?;
        let p = out.plane();
        let mut y = Tensor::zeros(out);
        if self.geom.is_pointwise() {
            matmul(self.out_c, self.in_c, p, &self.weight.value, false, x.data(), false, y.data_mut(), false);
        } else {
            let cols = im2col(x.data(), s.c, s.h, s.w, self.geom, out.h, out.w);
            matmul(self.out_c, self.patch_len(), p, &self.weight.value, false, &cols, false, y.data_mut(), false);
        }
        if let Some(b) = &self.bias {
            add_bias(y.data_mut(), &b.value, p);
        }
        Ok(y)
    }

    /// Backpropagates `dy` through the layer applied to `x`. Parameter
    /// gradients are accumulated only when `param_grads` is set; the input
    /// gradient is returned when `input_grad` is set.
    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        param_grads: bool,
        input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let s = x.shape();
        let out = self.out_shape(s)?;
        dy.expect_shape(out)?;
        let p = out.plane();
        let k = self.patch_len();
        let cols = (param_grads || input_grad)
            .then(|| im2col(x.data(), s.c, s.h, s.w, self.geom, out.h, out.w));
        if param_grads {
            let cols = cols.as_ref().expect("computed above");
            matmul(self.out_c, p, k, dy.data(), false, cols, true, &mut self.weight.grad, true);
            if let Some(b) = &mut self.bias {
                accumulate_bias_grad(&mut b.grad, dy.data(), p);
            }
        }
        if !input_grad {
            return Ok(None);
        }
        let mut dcols = vec![T::zero(); k * p];
        matmul(k, self.out_c, p, &self.weight.value, true, dy.data(), false, &mut dcols, false);
        let mut dx = Tensor::zeros(s);
        col2im(&dcols, s.c, s.h, s.w, self.geom, out.h, out.w, dx.data_mut());
        Ok(Some(dx))
    }
}

impl<T: Scalar> Parameters<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

/// Transposed convolution with weight layout `[in_c, out_c, k, k]`; the
/// adjoint of a [`Conv2d`] with the same geometry.
#[derive(Clone, Debug)]
pub struct ConvTranspose2d<T> {
    pub in_c: usize,
    pub out_c: usize,
    pub geom: ConvGeom,
    pub weight: Param<T>,
    pub bias: Option<Param<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        in_c: usize,
        out_c: usize,
        geom: ConvGeom,
        bias: bool,
        init_std: f64,
        rng: &mut R,
    ) -> Self {
        let weight = Param::normal(in_c * out_c * geom.kh * geom.kw, 0.0, init_std, rng);
        let bias = bias.then(|| Param::filled(out_c, T::zero()));
        Self { in_c, out_c, geom, weight, bias }
    }

    pub fn out_shape(&self, input: Shape) -> Result<Shape> {
        if input.c != self.in_c {
            return Err(Error::Shape {
                expected: Shape::new(self.in_c, input.h, input.w),
                actual: input,
            });
        }
        let (oh, ow) = self.geom.transposed_out_size(input.h, input.w).ok_or_else(|| {
            Error::precondition(alloc::format!("input {input} gives an empty transposed output"))
        })?;
        Ok(Shape::new(self.out_c, oh, ow))
    }

    fn patch_len(&self) -> usize {
        self.out_c * self.geom.kh * self.geom.kw
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let s = x.shape();
        let out = self.out_shape(s)?;
        let p = s.plane();
        let k = self.patch_len();
        let mut cols = vec![T::zero(); k * p];
        matmul(k, self.in_c, p, &self.weight.value, true, x.data(), false, &mut cols, false);
        let mut y = Tensor::zeros(out);
        col2im(&cols, self.out_c, out.h, out.w, self.geom, s.h, s.w, y.data_mut());
        if let Some(b) = &self.bias {
            add_bias(y.data_mut(), &b.value, out.plane());
        }
        Ok(y)
    }

    pub fn backward(
        &mut self,
        x: &Tensor<T>,
        dy: &Tensor<T>,
        param_grads: bool,
        input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let s = x.shape();
        let out = self.out_shape(s)?;
        dy.expect_shape(out)?;
        let p = s.plane();
        let k = self.patch_len();
        let dcols = im2col(dy.data(), out.c, out.h, out.w, self.geom, s.h, s.w);
        if param_grads {
            matmul(self.in_c, p, k, x.data(), false, &dcols, true, &mut self.weight.grad, true);
            if let Some(b) = &mut self.bias {
                accumulate_bias_grad(&mut b.grad, dy.data(), out.plane());
            }
        }
        if !input_grad {
            return Ok(None);
        }
        let mut dx = Tensor::zeros(s);
        matmul(self.in_c, k, p, &self.weight.value, false, &dcols, false, dx.data_mut(), false);
        Ok(Some(dx))
    }
}

impl<T: Scalar> Parameters<T> for ConvTranspose2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        f(&join(prefix, "weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(&join(prefix, "bias"), b);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        f(&join(prefix, "weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct-sum convolution used as an independent reference.
    fn conv_ref(x: &Tensor<f64>, conv: &Conv2d<f64>) -> Tensor<f64> {
        let s = x.shape();
        let g = conv.geom;
        let (oh, ow) = g.out_size(s.h, s.w).unwrap();
        Tensor::from_fn(Shape::new(conv.out_c, oh, ow), |co, oy, ox| {
            let mut acc = conv.bias.as_ref().map_or(0.0, |b| b.value[co]);
            for ci in 0..conv.in_c {
                for ky in 0..g.kh {
                    for kx in 0..g.kw {
                        let iy = (oy * g.stride + ky) as isize - g.pad_h as isize;
                        let ix = (ox * g.stride + kx) as isize - g.pad_w as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < s.h && (ix as usize) < s.w {
                            let wi = ((co * conv.in_c + ci) * g.kh + ky) * g.kw + kx;
                            acc += conv.weight.value[wi] * x.get(ci, iy as usize, ix as usize);
                        }
                    }
                }
            }
            acc
        })
    }

    /// Scatter-form transposed convolution.
    fn conv_t_ref(x: &Tensor<f64>, conv: &ConvTranspose2d<f64>) -> Tensor<f64> {
        let s = x.shape();
        let g = conv.geom;
        let (oh, ow) = g.transposed_out_size(s.h, s.w).unwrap();
        let mut y = Tensor::zeros(Shape::new(conv.out_c, oh, ow));
        for ci in 0..conv.in_c {
            for iy in 0..s.h {
                for ix in 0..s.w {
                    for co in 0..conv.out_c {
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                let oy = (iy * g.stride + ky) as isize - g.pad_h as isize;
                                let ox = (ix * g.stride + kx) as isize - g.pad_w as isize;
                                if oy >= 0 && ox >= 0 && (oy as usize) < oh && (ox as usize) < ow {
                                    let wi = ((ci * conv.out_c + co) * g.kh + ky) * g.kw + kx;
                                    let v = y.get(co, oy as usize, ox as usize)
                                        + conv.weight.value[wi] * x.get(ci, iy, ix);
                                    y.set(co, oy as usize, ox as usize, v);
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = &conv.bias {
            for co in 0..conv.out_c {
                for v in &mut y.data_mut()[co * oh * ow..(co + 1) * oh * ow] {
                    *v += b.value[co];
                }
            }
        }
        y
    }

    fn random_tensor(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_, _, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for geom in [ConvGeom::square(4, 2, 1), ConvGeom::square(4, 1, 1), ConvGeom::square(1, 1, 0),
            ConvGeom { kh: 1, kw: 3, stride: 1, pad_h: 0, pad_w: 1 }]
        {
            let conv = Conv2d::<f64>::new(3, 5, geom, true, 0.5, &mut rng);
            let x = random_tensor(Shape::new(3, 8, 6), &mut rng);
            let got = conv.forward(&x).unwrap();
            let want = conv_ref(&x, &conv);
            assert_eq!(got.shape(), want.shape());
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_transpose_matches_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let conv = ConvTranspose2d::<f64>::new(4, 3, ConvGeom::square(4, 2, 1), true, 0.5, &mut rng);
        let x = random_tensor(Shape::new(4, 3, 5), &mut rng);
        let got = conv.forward(&x).unwrap();
        assert_eq!(got.shape(), Shape::new(3, 6, 10));
        let want = conv_t_ref(&x, &conv);
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    // <dy, J dx> == <J^T dy, dx> checks the input gradient is the exact adjoint.
    #[test]
    fn conv_input_gradient_is_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut conv = Conv2d::<f64>::new(2, 3, ConvGeom::square(4, 2, 1), false, 0.5, &mut rng);
        let x = random_tensor(Shape::new(2, 8, 8), &mut rng);
        let dx = random_tensor(x.shape(), &mut rng);
        let y_shape = conv.out_shape(x.shape()).unwrap();
        let dy = random_tensor(y_shape, &mut rng);
        let jdx = conv.forward(&dx).unwrap();
        let jt_dy = conv.backward(&x, &dy, false, true).unwrap().unwrap();
        assert!((dot(&dy, &jdx) - dot(&jt_dy, &dx)).abs() < 1e-10);
    }

    #[test]
    fn conv_transpose_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let geom = ConvGeom::square(4, 2, 1);
        let conv = Conv2d::<f64>::new(3, 2, geom, false, 0.5, &mut rng);
        // same weights read as [in=2, out=3] for the transposed layer
        let mut convt = ConvTranspose2d::<f64>::new(2, 3, geom, false, 0.5, &mut rng);
        convt.weight.value = conv.weight.value.clone();
        let x = random_tensor(Shape::new(3, 8, 8), &mut rng);
        let z = random_tensor(Shape::new(2, 4, 4), &mut rng);
        let lhs = dot(&conv.forward(&x).unwrap(), &z);
        let rhs = dot(&x, &convt.forward(&z).unwrap());
        assert!((lhs - rhs).abs() < 1e-10);
    }

    fn finite_difference_check<F>(params: &mut [f64], analytic: &[f64], mut loss: F)
    where
        F: FnMut(&[f64]) -> f64,
    {
        let h = 1e-6;
        for i in (0..params.len()).step_by(7) {
            let orig = params[i];
            params[i] = orig + h;
            let up = loss(params);
            params[i] = orig - h;
            let down = loss(params);
            params[i] = orig;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - analytic[i]).abs() < 1e-6 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", analytic[i]);
        }
    }

    #[test]
    fn conv_weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut conv = Conv2d::<f64>::new(2, 3, ConvGeom::square(4, 2, 1), true, 0.5, &mut rng);
        let x = random_tensor(Shape::new(2, 6, 6), &mut rng);
        let probe = random_tensor(conv.out_shape(x.shape()).unwrap(), &mut rng);
        conv.backward(&x, &probe, true, false).unwrap();
        let analytic = conv.weight.grad.clone();
        let mut w = conv.weight.value.clone();
        let mut c2 = conv.clone();
        finite_difference_check(&mut w, &analytic, |wv| {
            c2.weight.value.copy_from_slice(wv);
            dot(&c2.forward(&x).unwrap(), &probe)
        });
        let bias_grad = conv.bias.as_ref().unwrap().grad.clone();
        for (co, g) in bias_grad.iter().enumerate() {
            let want: f64 = probe.channel(co).iter().sum();
            assert!((g - want).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_transpose_weight_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut conv = ConvTranspose2d::<f64>::new(3, 2, ConvGeom::square(4, 2, 1), true, 0.5, &mut rng);
        let x = random_tensor(Shape::new(3, 3, 3), &mut rng);
        let probe = random_tensor(conv.out_shape(x.shape()).unwrap(), &mut rng);
        let dx = conv.backward(&x, &probe, true, true).unwrap().unwrap();
        let analytic = conv.weight.grad.clone();
        let mut w = conv.weight.value.clone();
        let mut c2 = conv.clone();
        finite_difference_check(&mut w, &analytic, |wv| {
            c2.weight.value.copy_from_slice(wv);
            dot(&c2.forward(&x).unwrap(), &probe)
        });
        let mut xv = x.data().to_vec();
        finite_difference_check(&mut xv, dx.data(), |v| {
            let xt = Tensor::from_vec(x.shape(), v.to_vec()).unwrap();
            dot(&conv.forward(&xt).unwrap(), &probe)
        });
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let conv = Conv2d::<f32>::new(6, 4, ConvGeom::square(4, 2, 1), true, 0.02, &mut rng);
        assert!(conv.forward(&Tensor::zeros(Shape::new(3, 8, 8))).is_err());
    }
}
