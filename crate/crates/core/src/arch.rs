//! Architecture configuration for the U-Net generator and the PatchGAN
//! discriminator, with the shape and parameter-count arithmetic both
//! networks are built from.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder filter schedule of the full-resolution generator.
pub const FULL_DOWN_FILTERS: [usize; 8] = [64, 128, 256, 512, 512, 512, 512, 512];
/// Decoder filter schedule of the full-resolution generator.
pub const FULL_UP_FILTERS: [usize; 7] = [512, 512, 512, 512, 256, 128, 64];
pub const DEFAULT_RESOLUTION: usize = 512;
pub const KERNEL: usize = 4;
pub const STRIDE: usize = 2;
pub const LEAKY_SLOPE: f64 = 0.2;
pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormKind {
    /// Per-channel normalization over the spatial plane with learned scale and shift.
    #[default]
    Instance,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub resolution: usize,
    pub down_filters: Vec<usize>,
    pub up_filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub dropout_rate: f64,
    /// Number of leading decoder blocks that apply dropout in train mode.
    pub dropout_blocks: usize,
    pub norm: NormKind,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::for_resolution(DEFAULT_RESOLUTION).expect("default resolution is valid")
    }
}

impl GeneratorConfig {
    /// Schedule for resolution `s`: the full schedule truncated to
    /// `min(8, log2 s)` encoder blocks, decoder mirroring the encoder.
    pub fn for_resolution(s: usize) -> Result<Self> {
        check_resolution(s)?;
        let depth = (s.trailing_zeros() as usize).min(FULL_DOWN_FILTERS.len());
        let down_filters: Vec<usize> = FULL_DOWN_FILTERS[..depth].to_vec();
        let up_filters: Vec<usize> = down_filters[..depth - 1].iter().rev().copied().collect();
        let cfg = Self {
            resolution: s,
            down_filters,
            up_filters,
            kernel: KERNEL,
            stride: STRIDE,
            dropout_rate: 0.5,
            dropout_blocks: 3,
            norm: NormKind::Instance,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel != KERNEL || self.stride != STRIDE {
            return Err(Error::config(alloc::format!(
                "generator supports kernel {KERNEL} stride {STRIDE}, got kernel {} stride {}",
                self.kernel,
                self.stride
            )));
        }
        if self.down_filters.is_empty() {
            return Err(Error::config("generator needs at least one encoder block"));
        }
        if self.down_filters.len() != self.up_filters.len() + 1 {
            return Err(Error::config(alloc::format!(
                "{} encoder blocks need {} decoder blocks, got {}",
                self.down_filters.len(),
                self.down_filters.len() - 1,
                self.up_filters.len()
            )));
        }
        if self.down_filters.iter().chain(&self.up_filters).any(|&f| f == 0) {
            return Err(Error::config("filter counts must be positive"));
        }
        let depth = self.down_filters.len() as u32;
        if depth >= usize::BITS || !self.resolution.is_multiple_of(1usize << depth) {
            return Err(Error::config(alloc::format!(
                "resolution {} is not divisible by 2^{depth} (bottleneck would be below 1x1)",
                self.resolution
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(alloc::format!(
                "dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.dropout_blocks > self.up_filters.len() {
            return Err(Error::config(alloc::format!(
                "dropout_blocks {} exceeds decoder depth {}",
                self.dropout_blocks,
                self.up_filters.len()
            )));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.down_filters.len()
    }

    pub fn bottleneck_size(&self) -> usize {
        self.resolution >> self.depth()
    }

    /// Input channels of decoder block `j`: the bottleneck for `j == 0`,
    /// otherwise the previous decoder output concatenated with the mirrored
    /// encoder activation.
    pub fn decoder_in_channels(&self, j: usize) -> usize {
        let n = self.depth();
        if j == 0 {
            self.down_filters[n - 1]
        } else {
            self.up_filters[j - 1] + self.down_filters[n - 1 - j]
        }
    }

    pub fn output_in_channels(&self) -> usize {
        self.up_filters.last().copied().unwrap_or(self.down_filters[0]) + self.down_filters[0]
    }

    /// The first and innermost encoder blocks are never normalized.
    pub fn encoder_normalized(&self, i: usize) -> bool {
        self.norm != NormKind::None && i != 0 && i + 1 != self.depth()
    }

    /// Closed-form trainable parameter count.
    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let mut total = 0;
        for (i, &c) in self.down_filters.iter().enumerate() {
            let cin = if i == 0 { 3 } else { self.down_filters[i - 1] };
            total += k2 * cin * c + if self.encoder_normalized(i) { 2 * c } else { c };
        }
        for (j, &c) in self.up_filters.iter().enumerate() {
            let normed = self.norm != NormKind::None;
            total += k2 * self.decoder_in_channels(j) * c + if normed { 2 * c } else { c };
        }
        total + k2 * self.output_in_channels() * 3 + 3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub down_filters: Vec<usize>,
    pub kernel: usize,
    /// Filters of the stride-1 block placed before the logit head.
    pub head_filters: usize,
    /// Condition on the generator input by channel concatenation.
    pub conditioned: bool,
    pub norm: NormKind,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            down_filters: alloc::vec![64, 128, 256],
            kernel: KERNEL,
            head_filters: 512,
            conditioned: true,
            norm: NormKind::Instance,
        }
    }
}

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.kernel != KERNEL {
            return Err(Error::config(alloc::format!(
                "discriminator supports kernel {KERNEL}, got {}",
                self.kernel
            )));
        }
        if self.down_filters.len() != 3 {
            return Err(Error::config(alloc::format!(
                "discriminator needs exactly three stride-2 blocks, got {}",
                self.down_filters.len()
            )));
        }
        if self.down_filters.contains(&0) || self.head_filters == 0 {
            return Err(Error::config("filter counts must be positive"));
        }
        Ok(())
    }

    pub fn in_channels(&self) -> usize {
        if self.conditioned {
            6
        } else {
            3
        }
    }

    /// Side of the logit map for an `s x s` input: three halvings, then two
    /// stride-1 kernel-4 convolutions with one pixel of padding.
    pub fn patch_size(&self, s: usize) -> Result<usize> {
        let mut side = s;
        for _ in &self.down_filters {
            if side < 2 || !side.is_multiple_of(2) {
                return Err(Error::config(alloc::format!(
                    "input side {s} does not survive three stride-2 halvings"
                )));
            }
            side /= 2;
        }
        // k=4, s=1, p=1 shrinks by one per convolution
        if side < 3 {
            return Err(Error::config(alloc::format!(
                "input side {s} too small for the patch head"
            )));
        }
        Ok(side - 2)
    }

    pub fn parameter_count(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        let normed = self.norm != NormKind::None;
        let mut cin = self.in_channels();
        let mut total = 0;
        for (i, &c) in self.down_filters.iter().enumerate() {
            total += k2 * cin * c + if normed && i > 0 { 2 * c } else { c };
            cin = c;
        }
        total += k2 * cin * self.head_filters
            + if normed { 2 * self.head_filters } else { self.head_filters };
        total + k2 * self.head_filters + 1
    }
}

pub fn check_resolution(s: usize) -> Result<()> {
    if !s.is_power_of_two() || !(64..=512).contains(&s) {
        return Err(Error::config(alloc::format!(
            "resolution must be a power of two in [64, 512], got {s}"
        )));
    }
    Ok(())
}
