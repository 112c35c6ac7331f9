//! U-Net generator: stride-2 convolutions down to the bottleneck, stride-2
//! transposed convolutions back up, with each decoder output concatenated
//! with the encoder activation of the same resolution.

use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::arch::{GeneratorConfig, NormKind, INIT_STD, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::nn::{
    dropout_mask, join, leaky_relu, leaky_relu_backward, relu, relu_backward, tanh, tanh_backward,
    Conv2d, ConvGeom, ConvTranspose2d, InstanceNorm, NormCache, Param, Parameters,
};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

const GEOM: ConvGeom = ConvGeom::square(4, 2, 1);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active; the only source of stochasticity.
    Train,
    Eval,
}

#[derive(Clone, Debug)]
struct EncoderBlock<T> {
    conv: Conv2d<T>,
    norm: Option<InstanceNorm<T>>,
}

#[derive(Clone, Debug)]
struct DecoderBlock<T> {
    conv: ConvTranspose2d<T>,
    norm: Option<InstanceNorm<T>>,
    dropout: bool,
}

#[derive(Clone, Debug)]
pub struct Generator<T> {
    cfg: GeneratorConfig,
    encoders: Vec<EncoderBlock<T>>,
    decoders: Vec<DecoderBlock<T>>,
    output: ConvTranspose2d<T>,
}

/// Activations retained by a training forward pass.
#[derive(Clone, Debug)]
pub struct GeneratorTrace<T> {
    input: Tensor<T>,
    enc_out: Vec<Tensor<T>>,
    enc_norm: Vec<Option<NormCache<T>>>,
    /// Decoder inputs (after skip concatenation for all but the first block).
    dec_in: Vec<Tensor<T>>,
    dec_out: Vec<Tensor<T>>,
    dec_norm: Vec<Option<NormCache<T>>>,
    dec_mask: Vec<Option<Vec<T>>>,
    out_in: Tensor<T>,
    output: Tensor<T>,
}

impl<T> GeneratorTrace<T> {
    pub fn output(&self) -> &Tensor<T> {
        &self.output
    }
}

impl<T: Scalar> Generator<T> {
    pub fn new<R: Rng + ?Sized>(cfg: GeneratorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let normed = cfg.norm == NormKind::Instance;
        let encoders = cfg
            .down_filters
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let cin = if i == 0 { 3 } else { cfg.down_filters[i - 1] };
                let norm = cfg.encoder_normalized(i);
                EncoderBlock {
                    conv: Conv2d::new(cin, c, GEOM, !norm, INIT_STD, rng),
                    norm: norm.then(|| InstanceNorm::new(c)),
                }
            })
            .collect();
        let decoders = cfg
            .up_filters
            .iter()
            .enumerate()
            .map(|(j, &c)| DecoderBlock {
                conv: ConvTranspose2d::new(cfg.decoder_in_channels(j), c, GEOM, !normed, INIT_STD, rng),
                norm: normed.then(|| InstanceNorm::new(c)),
                dropout: j < cfg.dropout_blocks && cfg.dropout_rate > 0.0,
            })
            .collect();
        let output = ConvTranspose2d::new(cfg.output_in_channels(), 3, GEOM, true, INIT_STD, rng);
        let gen = Self { cfg, encoders, decoders, output };
        gen.audit_channels()?;
        Ok(gen)
    }

    /// Checks that every layer's input channels match what the wiring feeds it.
    fn audit_channels(&self) -> Result<()> {
        let n = self.encoders.len();
        let mut prev = 3;
        for e in &self.encoders {
            if e.conv.in_c != prev {
                return Err(Error::config("encoder channel chain broken"));
            }
            prev = e.conv.out_c;
        }
        for (j, d) in self.decoders.iter().enumerate() {
            let skip = if j == 0 { 0 } else { self.encoders[n - 1 - j].conv.out_c };
            let from_below = if j == 0 { prev } else { self.decoders[j - 1].conv.out_c };
            if d.conv.in_c != from_below + skip {
                return Err(Error::config(alloc::format!(
                    "decoder {j} expects {} channels, wiring provides {}",
                    d.conv.in_c,
                    from_below + skip
                )));
            }
        }
        let last = self.decoders.last().map_or(prev, |d| d.conv.out_c);
        if self.output.in_c != last + self.encoders[0].conv.out_c {
            return Err(Error::config("output layer channel mismatch"));
        }
        Ok(())
    }

    pub fn config(&self) -> &GeneratorConfig {
        &self.cfg
    }

    pub fn encoder_blocks(&self) -> usize {
        self.encoders.len()
    }

    pub fn decoder_blocks(&self) -> usize {
        self.decoders.len()
    }

    pub fn encoder_filters(&self) -> Vec<usize> {
        self.encoders.iter().map(|e| e.conv.out_c).collect()
    }

    pub fn decoder_filters(&self) -> Vec<usize> {
        self.decoders.iter().map(|d| d.conv.out_c).collect()
    }

    /// Channel count each decoder block receives.
    pub fn decoder_inputs(&self) -> Vec<usize> {
        self.decoders.iter().map(|d| d.conv.in_c).collect()
    }

    pub fn input_shape(&self) -> Shape {
        Shape::new(3, self.cfg.resolution, self.cfg.resolution)
    }

    /// Spatial side of the innermost activation.
    pub fn bottleneck_size(&self) -> usize {
        self.cfg.bottleneck_size()
    }

    /// Deterministic forward pass (dropout off).
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, None)?.output)
    }

    /// Forward pass that keeps the activations needed by [`Generator::backward`].
    pub fn forward_train<R: RngCore>(&self, x: &Tensor<T>, rng: &mut R) -> Result<GeneratorTrace<T>> {
        self.run(x, Some(rng))
    }

    /// Dropout-free forward pass that keeps activations for backpropagation.
    pub fn forward_trace(&self, x: &Tensor<T>) -> Result<GeneratorTrace<T>> {
        self.run(x, None)
    }

    pub fn forward_mode<R: RngCore>(&self, x: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Tensor<T>> {
        match mode {
            Mode::Train => Ok(self.run(x, Some(rng))?.output),
            Mode::Eval => self.forward(x),
        }
    }

    /// Dropout is applied exactly when a random source is supplied.
    fn run(&self, x: &Tensor<T>, mut dropout_rng: Option<&mut dyn RngCore>) -> Result<GeneratorTrace<T>> {
        x.expect_shape(self.input_shape())?;
        let slope = T::from_f64_lossy(LEAKY_SLOPE);
        let n = self.encoders.len();

        let mut enc_out: Vec<Tensor<T>> = Vec::with_capacity(n);
        let mut enc_norm = Vec::with_capacity(n);
        for (i, block) in self.encoders.iter().enumerate() {
            let src = if i == 0 { x } else { &enc_out[i - 1] };
            let mut h = block.conv.forward(src)?;
            let cache = match &block.norm {
                Some(norm) => {
                    let (y, cache) = norm.forward(&h)?;
                    h = y;
                    Some(cache)
                }
                None => None,
            };
            leaky_relu(&mut h, slope);
            enc_out.push(h);
            enc_norm.push(cache);
        }

        let mut dec_in: Vec<Tensor<T>> = Vec::with_capacity(self.decoders.len());
        let mut dec_out: Vec<Tensor<T>> = Vec::with_capacity(self.decoders.len());
        let mut dec_norm = Vec::with_capacity(self.decoders.len());
        let mut dec_mask = Vec::with_capacity(self.decoders.len());
        for (j, block) in self.decoders.iter().enumerate() {
            let input = if j == 0 {
                enc_out[n - 1].clone()
            } else {
                Tensor::concat_channels(&dec_out[j - 1], &enc_out[n - 1 - j])?
            };
            let mut h = block.conv.forward(&input)?;
            let cache = match &block.norm {
                Some(norm) => {
                    let (y, cache) = norm.forward(&h)?;
                    h = y;
                    Some(cache)
                }
                None => None,
            };
            let mask = match dropout_rng.as_deref_mut() {
                Some(rng) if block.dropout => {
                let m: Vec<T> = dropout_mask(h.data().len(), self.cfg.dropout_rate, rng);
                for (v, &k) in h.data_mut().iter_mut().zip(&m) {
                    *v *= k;
                }
                Some(m)
                }
                _ => None,
            };
            relu(&mut h);
            dec_in.push(input);
            dec_out.push(h);
            dec_norm.push(cache);
            dec_mask.push(mask);
        }

        let out_in = match dec_out.last() {
            Some(last) => Tensor::concat_channels(last, &enc_out[0])?,
            None => Tensor::concat_channels(&enc_out[0], &enc_out[0])?,
        };
        let mut output = self.output.forward(&out_in)?;
        tanh(&mut output);

        Ok(GeneratorTrace {
            input: x.clone(),
            enc_out,
            enc_norm,
            dec_in,
            dec_out,
            dec_norm,
            dec_mask,
            out_in,
            output,
        })
    }

    /// Accumulates parameter gradients for the loss gradient `grad_out`
    /// with respect to the traced output.
    pub fn backward(&mut self, trace: &GeneratorTrace<T>, grad_out: &Tensor<T>) -> Result<()> {
        grad_out.expect_shape(trace.output.shape())?;
        let slope = T::from_f64_lossy(LEAKY_SLOPE);
        let n = self.encoders.len();
        let mut enc_grad: Vec<Option<Tensor<T>>> = (0..n).map(|_| None).collect();
        let add = |slot: &mut Option<Tensor<T>>, g: Tensor<T>| match slot {
            Some(acc) => acc.add_assign(&g),
            None => *slot = Some(g),
        };

        let mut g = grad_out.clone();
        tanh_backward(&trace.output, &mut g);
        let d_in = self.output.backward(&trace.out_in, &g, true, true)?.expect("input grad");
        let first_c = trace.dec_out.last().map_or(self.encoders[0].conv.out_c, |t| t.shape().c);
        let (d_below, d_skip) = d_in.split_channels(first_c);
        add(&mut enc_grad[0], d_skip);
        let mut upstream = if self.decoders.is_empty() {
            add(&mut enc_grad[0], d_below);
            None
        } else {
            Some(d_below)
        };

        for j in (0..self.decoders.len()).rev() {
            let mut g = upstream.take().expect("decoder gradient");
            relu_backward(&trace.dec_out[j], &mut g);
            if let Some(mask) = &trace.dec_mask[j] {
                for (v, &k) in g.data_mut().iter_mut().zip(mask) {
                    *v *= k;
                }
            }
            let block = &mut self.decoders[j];
            if let (Some(norm), Some(cache)) = (&mut block.norm, &trace.dec_norm[j]) {
                g = norm.backward(cache, &g, true);
            }
            let d_in = block.conv.backward(&trace.dec_in[j], &g, true, true)?.expect("input grad");
            if j == 0 {
                add(&mut enc_grad[n - 1], d_in);
            } else {
                let (d_below, d_skip) = d_in.split_channels(trace.dec_out[j - 1].shape().c);
                add(&mut enc_grad[n - 1 - j], d_skip);
                upstream = Some(d_below);
            }
        }

        for i in (0..n).rev() {
            let Some(mut g) = enc_grad[i].take() else { continue };
            leaky_relu_backward(&trace.enc_out[i], &mut g, slope);
            let block = &mut self.encoders[i];
            if let (Some(norm), Some(cache)) = (&mut block.norm, &trace.enc_norm[i]) {
                g = norm.backward(cache, &g, true);
            }
            let src = if i == 0 { &trace.input } else { &trace.enc_out[i - 1] };
            if let Some(dx) = block.conv.backward(src, &g, true, i > 0)? {
                add(&mut enc_grad[i - 1], dx);
            }
        }
        Ok(())
    }
}

impl<T: Scalar> Parameters<T> for Generator<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, e) in self.encoders.iter().enumerate() {
            let p = join(prefix, &alloc::format!("enc.{i}"));
            e.conv.visit(&join(&p, "conv"), f);
            if let Some(n) = &e.norm {
                n.visit(&join(&p, "norm"), f);
            }
        }
        for (j, d) in self.decoders.iter().enumerate() {
            let p = join(prefix, &alloc::format!("dec.{j}"));
            d.conv.visit(&join(&p, "conv"), f);
            if let Some(n) = &d.norm {
                n.visit(&join(&p, "norm"), f);
            }
        }
        self.output.visit(&join(prefix, "out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, e) in self.encoders.iter_mut().enumerate() {
            let p = join(prefix, &alloc::format!("enc.{i}"));
            e.conv.visit_mut(&join(&p, "conv"), f);
            if let Some(n) = &mut e.norm {
                n.visit_mut(&join(&p, "norm"), f);
            }
        }
        for (j, d) in self.decoders.iter_mut().enumerate() {
            let p = join(prefix, &alloc::format!("dec.{j}"));
            d.conv.visit_mut(&join(&p, "conv"), f);
            if let Some(n) = &mut d.norm {
                n.visit_mut(&join(&p, "norm"), f);
            }
        }
        self.output.visit_mut(&join(prefix, "out"), f);
    }
}
