//! Extractor selection, extractor weights and the CSV logs.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use artextend_core::{
    sample_indices, ExamplePair, FeatureExtractor, FidStats, ImageTensor, InceptionPool3, LossRecord,
    PixelProjection, WeightSource,
};
use safetensors::tensor::Dtype;
use safetensors::SafeTensors;

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub const PIXEL_PROJECTION: &str = PixelProjection::NAME;
pub const INCEPTION_POOL3: &str = InceptionPool3::NAME;
pub const WEIGHTS_ENV: &str = "ARTEXTEND_EXTRACTOR_WEIGHTS";
pub const LOSS_HEADER: &str = "step,epoch,d_loss,g_adv_loss,g_l1_loss,g_total";
pub const FID_HEADER: &str = "epoch,fid";

const WEIGHTS_HELP: &str = "inception-pool3 needs the FID Inception-v3 weights as a safetensors file \
(tensor names as in pytorch-fid, e.g. Conv2d_1a_3x3.conv.weight). Convert pt_inception-2015-12-05 \
with tools/convert_inception.py, then pass --extractor-weights <file>, set fid.extractor_weights, or \
export ARTEXTEND_EXTRACTOR_WEIGHTS=<file>";

/// Named tensors read from a safetensors file.
pub struct SafetensorsWeights {
    path: PathBuf,
    bytes: Vec<u8>,
}

impl SafetensorsWeights {
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingResource(format!("{}: file not found. {WEIGHTS_HELP}", path.display()))
            }
            _ => Error::Io { path: path.into(), source: e },
        })?;
        SafeTensors::deserialize(&bytes)
            .map_err(|e| Error::MissingResource(format!("{}: not a safetensors file ({e}). {WEIGHTS_HELP}", path.display())))?;
        Ok(Self { path: path.into(), bytes })
    }
}

impl WeightSource for SafetensorsWeights {
    fn tensor(&self, name: &str, shape: &[usize]) -> artextend_core::Result<Vec<f32>> {
        let st = SafeTensors::deserialize(&self.bytes).expect("validated on open");
        let fail = |msg: String| artextend_core::Error::Weights(format!("{}: {name}: {msg}", self.path.display()));
        let view = st.tensor(name).map_err(|_| fail("missing".into()))?;
        let n: usize = shape.iter().product();
        if view.shape().iter().product::<usize>() != n {
            return Err(fail(format!("shape {:?}, expected {shape:?}", view.shape())));
        }
        match view.dtype() {
            Dtype::F32 => Ok(view.data().chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect()),
            Dtype::F64 => {
                Ok(view.data().chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()) as f32).collect())
            }
            other => Err(fail(format!("unsupported dtype {other:?}"))),
        }
    }
}

/// Builds the extractor called `name`. Weights come from `weights`, else
/// from `ARTEXTEND_EXTRACTOR_WEIGHTS`.
pub fn extractor(name: &str, weights: Option<&Path>) -> Result<Box<dyn FeatureExtractor + Send + Sync>> {
    match name {
        PIXEL_PROJECTION => Ok(Box::new(PixelProjection::new())),
        INCEPTION_POOL3 => {
            let path = weights
                .map(Path::to_path_buf)
                .or_else(|| std::env::var_os(WEIGHTS_ENV).map(PathBuf::from))
                .ok_or_else(|| Error::MissingResource(format!("no extractor weights given. {WEIGHTS_HELP}")))?;
            let src = SafetensorsWeights::open(&path)?;
            Ok(Box::new(InceptionPool3::load(&src)?))
        }
        other => Err(Error::Usage(format!(
            "unknown extractor {other:?} (expected {PIXEL_PROJECTION} or {INCEPTION_POOL3})"
        ))),
    }
}

/// FID between reconstructions and ground truth over a seeded sample of
/// corpus indices. Real-image statistics are computed once and reused.
pub struct FidEvaluator {
    extractor: Box<dyn FeatureExtractor + Send + Sync>,
    indices: Vec<usize>,
    real: Option<FidStats>,
}

impl FidEvaluator {
    /// Samples `min(sample_size, pool.len())` entries of `pool`.
    pub fn new(
        extractor: Box<dyn FeatureExtractor + Send + Sync>,
        pool: &[usize],
        sample_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let picked = sample_indices(pool.len(), sample_size, seed);
        if picked.len() < 2 {
            return Err(Error::Usage(format!(
                "FID needs at least 2 images, the evaluation set has {}",
                picked.len()
            )));
        }
        Ok(Self { extractor, indices: picked.into_iter().map(|i| pool[i]).collect(), real: None })
    }

    pub fn extractor_name(&self) -> &str {
        self.extractor.name()
    }

    pub fn evaluate(
        &mut self,
        corpus: &Corpus,
        mut reconstruct: impl FnMut(&ExamplePair) -> Result<ImageTensor>,
    ) -> Result<f64> {
        let mut real = Vec::new();
        let mut fake = Vec::with_capacity(self.indices.len());
        for &i in &self.indices {
            let pair = corpus.pair(i)?;
            if self.real.is_none() {
                real.push(self.extractor.extract(&pair.target)?);
            }
            fake.push(self.extractor.extract(&reconstruct(&pair)?)?);
        }
        if self.real.is_none() {
            self.real = Some(FidStats::from_features(&real)?);
        }
        let report = artextend_core::frechet_distance_report(&FidStats::from_features(&fake)?, self.real.as_ref().unwrap())?;
        if report.raw < 0.0 {
            log::info!("FID {:.3e} clamped to 0", report.raw);
        }
        Ok(report.value)
    }
}

pub fn fid_csv_path(metrics_dir: &Path, extractor: &str) -> PathBuf {
    metrics_dir.join(format!("fid_{extractor}.csv"))
}

pub fn loss_csv_path(metrics_dir: &Path) -> PathBuf {
    metrics_dir.join("losses.csv")
}

/// Append-only CSV with a fixed header.
pub struct CsvLog {
    path: PathBuf,
    file: File,
}

impl CsvLog {
    /// Opens `path` for appending, writing `header` if the file is new.
    /// With `keep` set, existing rows failing the predicate are dropped
    /// first (used to discard rows past a resumed checkpoint).
    pub fn open(path: &Path, header: &str, keep: Option<&dyn Fn(&str) -> bool>) -> Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(Error::io(parent))?;
        }
        let existing = path.exists();
        if existing {
            let f = File::open(path).map_err(Error::io(path))?;
            let mut lines = BufReader::new(f).lines();
            let first = lines.next().transpose().map_err(Error::io(path))?;
            if first.as_deref() != Some(header) {
                return Err(Error::Usage(format!("{}: unexpected header, expected {header:?}", path.display())));
            }
            if let Some(keep) = keep {
                let mut kept = format!("{header}\n");
                for line in lines {
                    let line = line.map_err(Error::io(path))?;
                    if keep(&line) {
                        kept.push_str(&line);
                        kept.push('\n');
                    }
                }
                fs::write(path, kept).map_err(Error::io(path))?;
            }
        } else {
            fs::write(path, format!("{header}\n")).map_err(Error::io(path))?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(Error::io(path))?;
        Ok(Self { path: path.into(), file })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, fields: &[String]) -> Result<()> {
        let line = format!("{}\n", fields.join(","));
        self.file.write_all(line.as_bytes()).map_err(Error::io(&self.path))?;
        self.file.flush().map_err(Error::io(&self.path))
    }

    pub fn loss_row(&mut self, r: &LossRecord) -> Result<()> {
        self.append(&[
            r.step.to_string(),
            r.epoch.to_string(),
            r.d_loss.to_string(),
            r.g_adv_loss.to_string(),
            r.g_l1_loss.to_string(),
            r.g_total.to_string(),
        ])
    }

    pub fn fid_row(&mut self, epoch: u64, fid: f64) -> Result<()> {
        self.append(&[epoch.to_string(), format!("{fid:.6}")])
    }
}

/// Loss records from a losses CSV.
pub fn read_losses(path: &Path) -> Result<Vec<LossRecord>> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv { path: path.into(), source })?;
    reader.deserialize().map(|r| r.map_err(|source| Error::Csv { path: path.into(), source })).collect()
}

/// `(epoch, fid)` rows from an FID CSV.
pub fn read_fid(path: &Path) -> Result<Vec<(u64, f64)>> {
    let mut reader = csv::Reader::from_path(path).map_err(|source| Error::Csv { path: path.into(), source })?;
    reader.deserialize().map(|r| r.map_err(|source| Error::Csv { path: path.into(), source })).collect()
}

/// Leading integer field of a CSV line.
pub(crate) fn first_field(line: &str) -> Option<u64> {
    line.split(',').next()?.parse().ok()
}
