//! PatchGAN discriminator: three stride-2 blocks, a stride-1 block and a
//! one-channel logit head, one logit per receptive-field patch.

use alloc::vec::Vec;

use rand::Rng;

use crate::arch::{DiscriminatorConfig, NormKind, INIT_STD, LEAKY_SLOPE};
use crate::error::{Error, Result};
use crate::nn::{
    join, leaky_relu, leaky_relu_backward, Conv2d, ConvGeom, InstanceNorm, NormCache, Param,
    Parameters,
};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

/// Grid of real/fake logits.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMap<T>(Tensor<T>);

impl<T: Scalar> PatchMap<T> {
    pub fn new(tensor: Tensor<T>) -> Result<Self> {
        let s = tensor.shape();
        if s.c != 1 {
            return Err(Error::Shape { expected: Shape::new(1, s.h, s.w), actual: s });
        }
        Ok(Self(tensor))
    }

    pub fn full(height: usize, width: usize, logit: T) -> Self {
        Self(Tensor::full(Shape::new(1, height, width), logit))
    }

    pub fn from_vec(height: usize, width: usize, logits: Vec<T>) -> Result<Self> {
        Self::new(Tensor::from_vec(Shape::new(1, height, width), logits)?)
    }

    pub fn height(&self) -> usize {
        self.0.shape().h
    }

    pub fn width(&self) -> usize {
        self.0.shape().w
    }

    pub fn logits(&self) -> &[T] {
        self.0.data()
    }

    pub fn as_tensor(&self) -> &Tensor<T> {
        &self.0
    }
}

#[derive(Clone, Debug)]
struct Block<T> {
    conv: Conv2d<T>,
    norm: Option<InstanceNorm<T>>,
}

#[derive(Clone, Debug)]
pub struct Discriminator<T> {
    cfg: DiscriminatorConfig,
    blocks: Vec<Block<T>>,
    head: Conv2d<T>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorTrace<T> {
    input: Tensor<T>,
    outs: Vec<Tensor<T>>,
    norms: Vec<Option<NormCache<T>>>,
    logits: PatchMap<T>,
}

impl<T> DiscriminatorTrace<T> {
    pub fn logits(&self) -> &PatchMap<T> {
        &self.logits
    }
}

impl<T: Scalar> Discriminator<T> {
    pub fn new<R: Rng + ?Sized>(cfg: DiscriminatorConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let normed = cfg.norm == NormKind::Instance;
        let k = cfg.kernel;
        let mut blocks = Vec::new();
        let mut cin = cfg.in_channels();
        for (i, &c) in cfg.down_filters.iter().enumerate() {
            let norm = normed && i > 0;
            blocks.push(Block {
                conv: Conv2d::new(cin, c, ConvGeom::square(k, 2, 1), !norm, INIT_STD, rng),
                norm: norm.then(|| InstanceNorm::new(c)),
            });
            cin = c;
        }
        blocks.push(Block {
            conv: Conv2d::new(cin, cfg.head_filters, ConvGeom::square(k, 1, 1), !normed, INIT_STD, rng),
            norm: normed.then(|| InstanceNorm::new(cfg.head_filters)),
        });
        let head = Conv2d::new(cfg.head_filters, 1, ConvGeom::square(k, 1, 1), true, INIT_STD, rng);
        Ok(Self { cfg, blocks, head })
    }

    pub fn config(&self) -> &DiscriminatorConfig {
        &self.cfg
    }

    /// Filters of the stride-2 blocks.
    pub fn downsampling_filters(&self) -> Vec<usize> {
        self.blocks
            .iter()
            .filter(|b| b.conv.geom.stride == 2)
            .map(|b| b.conv.out_c)
            .collect()
    }

    fn assemble(&self, condition: &Tensor<T>, candidate: &Tensor<T>) -> Result<Tensor<T>> {
        if condition.shape() != candidate.shape() || candidate.shape().c != 3 {
            return Err(Error::Shape { expected: condition.shape(), actual: candidate.shape() });
        }
        if self.cfg.conditioned {
            Tensor::concat_channels(condition, candidate)
        } else {
            Ok(candidate.clone())
        }
    }

    pub fn forward(&self, condition: &Tensor<T>, candidate: &Tensor<T>) -> Result<PatchMap<T>> {
        Ok(self.forward_train(condition, candidate)?.logits)
    }

    pub fn forward_train(&self, condition: &Tensor<T>, candidate: &Tensor<T>) -> Result<DiscriminatorTrace<T>> {
        let input = self.assemble(condition, candidate)?;
        let slope = T::from_f64_lossy(LEAKY_SLOPE);
        let mut outs: Vec<Tensor<T>> = Vec::with_capacity(self.blocks.len());
        let mut norms = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate() {
            let src = if i == 0 { &input } else { &outs[i - 1] };
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
            outs.push(h);
            norms.push(cache);
        }
        let logits = PatchMap::new(self.head.forward(outs.last().expect("at least one block"))?)?;
        Ok(DiscriminatorTrace { input, outs, norms, logits })
    }

    /// Backpropagates logit gradients. Parameter gradients accumulate only
    /// when `param_grads` is set. Returns the gradient with respect to the
    /// candidate image.
    pub fn backward(
        &mut self,
        trace: &DiscriminatorTrace<T>,
        grad_logits: &Tensor<T>,
        param_grads: bool,
        candidate_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        let slope = T::from_f64_lossy(LEAKY_SLOPE);
        let last = trace.outs.last().expect("at least one block");
        let mut g = self.head.backward(last, grad_logits, param_grads, true)?.expect("input grad");
        for i in (0..self.blocks.len()).rev() {
            leaky_relu_backward(&trace.outs[i], &mut g, slope);
            let block = &mut self.blocks[i];
            if let (Some(norm), Some(cache)) = (&mut block.norm, &trace.norms[i]) {
                g = norm.backward(cache, &g, param_grads);
            }
            let src = if i == 0 { &trace.input } else { &trace.outs[i - 1] };
            let want_input = i > 0 || candidate_grad;
            match block.conv.backward(src, &g, param_grads, want_input)? {
                Some(dx) => g = dx,
                None => return Ok(None),
            }
        }
        if self.cfg.conditioned {
            Ok(Some(g.split_channels(3).1))
        } else {
            Ok(Some(g))
        }
    }
}

impl<T: Scalar> Parameters<T> for Discriminator<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(&str, &Param<T>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            let p = join(prefix, &alloc::format!("block.{i}"));
            b.conv.visit(&join(&p, "conv"), f);
            if let Some(n) = &b.norm {
                n.visit(&join(&p, "norm"), f);
            }
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            let p = join(prefix, &alloc::format!("block.{i}"));
            b.conv.visit_mut(&join(&p, "conv"), f);
            if let Some(n) = &mut b.norm {
                n.visit_mut(&join(&p, "norm"), f);
            }
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
