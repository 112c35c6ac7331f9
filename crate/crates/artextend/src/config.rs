//! Declarative run configuration (strict JSON).

use std::fs;
use std::path::{Path, PathBuf};

use artextend_core::arch::DEFAULT_RESOLUTION;
use artextend_core::{DiscriminatorConfig, GeneratorConfig, NormKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::PIXEL_PROJECTION;

pub const SEED_ENV: &str = "ARTEXTEND_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSettings {
    /// Image directory scanned when no manifest exists yet.
    pub dir: PathBuf,
    /// Manifest written by `prepare` and read by `train`.
    pub manifest: PathBuf,
    /// Smallest accepted side in pixels; defaults to the resolution.
    pub min_side: Option<u32>,
    pub resolution: usize,
    /// Fraction of images held out of training and used for FID instead.
    pub split: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("corpus"),
            manifest: PathBuf::from("manifest.json"),
            min_side: None,
            resolution: DEFAULT_RESOLUTION,
            split: 0.0,
        }
    }
}

impl CorpusSettings {
    pub fn min_side(&self) -> u32 {
        self.min_side.unwrap_or(self.resolution as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchitectureSettings {
    pub norm: NormKind,
    pub dropout_rate: f64,
    pub dropout_blocks: usize,
    /// Whether the discriminator also sees the conditioning input.
    pub conditioned: bool,
    /// Explicit encoder filters; derived from the resolution when absent.
    pub down_filters: Option<Vec<usize>>,
    pub up_filters: Option<Vec<usize>>,
    pub discriminator_filters: Vec<usize>,
    pub discriminator_head_filters: usize,
}

impl Default for ArchitectureSettings {
    fn default() -> Self {
        let d = DiscriminatorConfig::default();
        Self {
            norm: NormKind::Instance,
            dropout_rate: 0.5,
            dropout_blocks: 3,
            conditioned: d.conditioned,
            down_filters: None,
            up_filters: None,
            discriminator_filters: d.down_filters,
            discriminator_head_filters: d.head_filters,
        }
    }
}

/// Trainer settings; the seed lives at the top level of [`RunConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub lambda_l1: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub epochs: u64,
    /// Stop after this many steps in total, even mid-epoch.
    pub max_steps: Option<u64>,
    pub fid_interval: u64,
    pub checkpoint_interval: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            lambda_l1: t.lambda_l1,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            batch_size: t.batch_size,
            epochs: t.epochs,
            max_steps: None,
            fid_interval: t.fid_interval,
            checkpoint_interval: t.checkpoint_interval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FidSettings {
    pub extractor: String,
    /// Weights file for extractors that need one.
    pub extractor_weights: Option<PathBuf>,
    pub sample_size: usize,
}

impl Default for FidSettings {
    fn default() -> Self {
        Self {
            extractor: PIXEL_PROJECTION.into(),
            extractor_weights: None,
            sample_size: TrainConfig::default().fid_sample_size,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathSettings {
    pub checkpoint_dir: PathBuf,
    pub metrics_dir: PathBuf,
    pub output_dir: PathBuf,
}

impl Default for PathSettings {
    fn default() -> Self {
        Self {
            checkpoint_dir: PathBuf::from("checkpoints"),
            metrics_dir: PathBuf::from("metrics"),
            output_dir: PathBuf::from("output"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub corpus: CorpusSettings,
    pub architecture: ArchitectureSettings,
    pub train: TrainSettings,
    pub fid: FidSettings,
    pub paths: PathSettings,
    pub seed: u64,
}

impl RunConfig {
    /// Parses and validates; relative paths are resolved against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| match source.kind() {
            std::io::ErrorKind::NotFound => Error::Config { path: path.into(), message: "file not found".into() },
            _ => Error::Io { path: path.into(), source },
        })?;
        let mut cfg = Self::parse(&text).map_err(|message| Error::Config { path: path.into(), message })?;
        if let Some(base) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    /// Strict parse: unknown keys and type mismatches are errors carrying
    /// line and column.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| e.to_string())?;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.corpus.dir,
            &mut self.corpus.manifest,
            &mut self.paths.checkpoint_dir,
            &mut self.paths.metrics_dir,
            &mut self.paths.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(w) = &mut self.fid.extractor_weights {
            if w.is_relative() {
                *w = base.join(&*w);
            }
        }
    }

    /// Applies `ARTEXTEND_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| Error::Usage(format!("{SEED_ENV}={v:?} is not an unsigned integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.generator()?;
        self.discriminator()?;
        self.train_config().validate()?;
        if !(0.0..1.0).contains(&self.corpus.split) {
            return Err(Error::Usage(format!("corpus.split {} outside [0, 1)", self.corpus.split)));
        }
        if self.train.max_steps == Some(0) {
            return Err(Error::Usage("train.max_steps must be at least 1".into()));
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<GeneratorConfig> {
        let a = &self.architecture;
        let mut g = GeneratorConfig::for_resolution(self.corpus.resolution)?;
        if let Some(d) = &a.down_filters {
            g.down_filters = d.clone();
        }
        if let Some(u) = &a.up_filters {
            g.up_filters = u.clone();
        } else if a.down_filters.is_some() {
            g.up_filters = g.down_filters[..g.down_filters.len().saturating_sub(1)].iter().rev().copied().collect();
        }
        g.norm = a.norm;
        g.dropout_rate = a.dropout_rate;
        g.dropout_blocks = a.dropout_blocks;
        g.validate()?;
        Ok(g)
    }

    pub fn discriminator(&self) -> Result<DiscriminatorConfig> {
        let a = &self.architecture;
        let d = DiscriminatorConfig {
            down_filters: a.discriminator_filters.clone(),
            head_filters: a.discriminator_head_filters,
            conditioned: a.conditioned,
            norm: a.norm,
            ..DiscriminatorConfig::default()
        };
        d.validate()?;
        d.patch_size(self.corpus.resolution)?;
        Ok(d)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            lambda_l1: t.lambda_l1,
            lr: t.lr,
            beta1: t.beta1,
            beta2: t.beta2,
            batch_size: t.batch_size,
            epochs: t.epochs,
            seed: self.seed,
            fid_interval: t.fid_interval,
            fid_sample_size: self.fid.sample_size,
            checkpoint_interval: t.checkpoint_interval,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_full_scale_setup() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.corpus.resolution, 512);
        assert_eq!(cfg.corpus.min_side(), 512);
        let t = cfg.train_config();
        assert_eq!((t.lr, t.beta1, t.batch_size, t.epochs, t.fid_interval), (2e-4, 0.5, 1, 150, 10));
        assert_eq!(cfg.generator().unwrap().down_filters.len(), 8);
    }

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(RunConfig::parse("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let err = RunConfig::parse("{\n  \"train\": {\"epochs\": 3, \"epoch\": 4}\n}").unwrap_err();
        assert!(err.contains("unknown field `epoch`"), "{err}");
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse(r#"{"corpus": {"resolution": 100}}"#).is_err());
        assert!(RunConfig::parse(r#"{"train": {"batch_size": 2}}"#).is_err());
        assert!(RunConfig::parse(r#"{"corpus": {"split": 1.0}}"#).is_err());
    }

    #[test]
    fn explicit_filters_mirror_into_decoder() {
        let cfg = RunConfig::parse(r#"{"corpus": {"resolution": 64}, "architecture": {"down_filters": [8, 16, 32, 32]}}"#)
            .unwrap();
        assert_eq!(cfg.generator().unwrap().up_filters, [32, 16, 8]);
    }
}
