//! One adversarial + L1 optimization step over a single example pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arch::{DiscriminatorConfig, GeneratorConfig};
use crate::discriminator::Discriminator;
use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorTrace};
use crate::nn::Parameters;
use crate::loss::{bce_grad, discriminator_loss, generator_adversarial_loss, l1_grad, l1_loss};
use crate::optim::{Adam, AdamConfig};
use crate::pairs::ExamplePair;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// RNG streams derived from the run seed.
const INIT_STREAM: u64 = 0;
const DROPOUT_STREAM: u64 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of the L1 term in the generator objective.
    pub lambda_l1: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: u64,
    pub seed: u64,
    pub fid_interval: u64,
    pub fid_sample_size: usize,
    pub checkpoint_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda_l1: 100.0,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            epochs: 150,
            seed: 0,
            fid_interval: 10,
            fid_sample_size: 500,
            checkpoint_interval: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size != 1 {
            return Err(Error::config(alloc::format!(
                "only batch size 1 is supported, got {}",
                self.batch_size
            )));
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("learning rate must be positive and betas in [0, 1)"));
        }
        if !(self.lambda_l1 >= 0.0) {
            return Err(Error::config("lambda_l1 must be non-negative"));
        }
        if self.fid_interval == 0 || self.checkpoint_interval == 0 {
            return Err(Error::config("fid_interval and checkpoint_interval must be at least 1"));
        }
        if self.fid_sample_size < 2 {
            return Err(Error::config("fid_sample_size must be at least 2"));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }
}

/// Losses of one training step. `g_total` is always
/// `g_adv_loss + lambda_l1 * g_l1_loss` evaluated in `f64`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: u64,
    pub d_loss: f64,
    pub g_adv_loss: f64,
    pub g_l1_loss: f64,
    pub g_total: f64,
}

impl LossRecord {
    fn is_finite(&self) -> bool {
        self.d_loss.is_finite() && self.g_adv_loss.is_finite() && self.g_l1_loss.is_finite() && self.g_total.is_finite()
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub opt_g: Adam<T>,
    pub opt_d: Adam<T>,
    /// Source of dropout masks.
    pub rng: ChaCha8Rng,
    /// Steps completed so far.
    pub step: u64,
    pub lambda_l1: f64,
}

impl<T: Scalar> TrainState<T> {
    pub fn new(gen_cfg: GeneratorConfig, disc_cfg: DiscriminatorConfig, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(cfg.seed);
        init.set_stream(INIT_STREAM);
        let generator = Generator::new(gen_cfg, &mut init)?;
        let discriminator = Discriminator::new(disc_cfg, &mut init)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(DROPOUT_STREAM);
        Ok(Self {
            opt_g: Adam::new(cfg.adam(), &generator),
            opt_d: Adam::new(cfg.adam(), &discriminator),
            generator,
            discriminator,
            rng,
            step: 0,
            lambda_l1: cfg.lambda_l1,
        })
    }

    /// One discriminator update followed by one generator update.
    ///
    /// The discriminator sees `(input, target)` as real and
    /// `(input, G(input))` as fake; the generator is then scored by the
    /// updated discriminator plus the weighted L1 distance to the target.
    /// Each optimizer only touches its own network. A non-finite loss
    /// aborts before the corresponding update is applied.
    pub fn train_step(&mut self, pair: &ExamplePair, epoch: u64) -> Result<LossRecord> {
        let x = pair.input.as_tensor().cast::<T>();
        let y = pair.target.as_tensor().cast::<T>();
        let step = self.step + 1;
        let mut record = LossRecord {
            step,
            epoch,
            d_loss: f64::NAN,
            g_adv_loss: f64::NAN,
            g_l1_loss: f64::NAN,
            g_total: f64::NAN,
        };

        let g_trace = self.generator.forward_train(&x, &mut self.rng)?;
        let fake = g_trace.output();

        let real_trace = self.discriminator.forward_train(&x, &y)?;
        let fake_trace = self.discriminator.forward_train(&x, fake)?;
        record.d_loss = discriminator_loss(real_trace.logits(), fake_trace.logits())?;
        if !record.d_loss.is_finite() {
            return Err(Error::NonFiniteLoss(record));
        }
        self.discriminator.zero_grad();
        self.discriminator.backward(&real_trace, &bce_grad(real_trace.logits(), 1.0), true, false)?;
        self.discriminator.backward(&fake_trace, &bce_grad(fake_trace.logits(), 0.0), true, false)?;
        drop((real_trace, fake_trace));
        self.opt_d.step(&mut self.discriminator)?;

        self.generator.zero_grad();
        let (adv, l1) =
            generator_gradients(&mut self.generator, &mut self.discriminator, &x, &y, &g_trace, self.lambda_l1)?;
        record.g_adv_loss = adv;
        record.g_l1_loss = l1;
        record.g_total = adv + self.lambda_l1 * l1;
        if !record.is_finite() {
            self.generator.zero_grad();
            return Err(Error::NonFiniteLoss(record));
        }
        self.opt_g.step(&mut self.generator)?;

        self.step = step;
        Ok(record)
    }
}

/// Accumulates into `generator` the gradient of
/// `adv(D(x, G(x))) + lambda_l1 * L1(G(x), y)` for the forward pass in
/// `trace`, holding the discriminator fixed. Returns the adversarial and L1
/// terms.
pub fn generator_gradients<T: Scalar>(
    generator: &mut Generator<T>,
    discriminator: &mut Discriminator<T>,
    x: &Tensor<T>,
    y: &Tensor<T>,
    trace: &GeneratorTrace<T>,
    lambda_l1: f64,
) -> Result<(f64, f64)> {
    let fake = trace.output();
    let judged = discriminator.forward_train(x, fake)?;
    let adv = generator_adversarial_loss(judged.logits());
    let l1 = l1_loss(fake, y)?;
    let mut grad = discriminator
        .backward(&judged, &bce_grad(judged.logits(), 1.0), false, true)?
        .expect("candidate gradient requested");
    if lambda_l1 != 0.0 {
        grad.add_assign(&l1_grad(fake, y, lambda_l1)?);
    }
    generator.backward(trace, &grad)?;
    Ok((adv, l1))
}
