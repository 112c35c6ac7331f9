//! The four pipeline commands, independent of argument parsing.

use std::path::{Path, PathBuf};

use artextend_core::{extend_series, ExamplePair, ImageTensor, Inpainter};

use crate::checkpoint::{self, GeneratorKind};
use crate::config::RunConfig;
use crate::corpus::{load_square, scan_corpus, Corpus, CorpusManifest};
use crate::error::{Error, Result};
use crate::export::export_series;
use crate::metrics::{self, CsvLog, FidEvaluator, FID_HEADER};
use crate::trainer::{TrainSummary, Trainer};

/// Scans `input_dir` and writes the manifest to `out`.
pub fn prepare(input_dir: &Path, out: &Path, size: usize, min_side: Option<u32>, seed: u64) -> Result<CorpusManifest> {
    let manifest = scan_corpus(input_dir, min_side.unwrap_or(size as u32), size, seed)?;
    manifest.write(out)?;
    Ok(manifest)
}

/// Reads the configured manifest, scanning the corpus directory first when
/// the manifest does not exist yet.
pub fn corpus_manifest(cfg: &RunConfig) -> Result<CorpusManifest> {
    let path = &cfg.corpus.manifest;
    if path.exists() {
        return CorpusManifest::read(path);
    }
    log::info!("{} not found; scanning {}", path.display(), cfg.corpus.dir.display());
    prepare(&cfg.corpus.dir, path, cfg.corpus.resolution, cfg.corpus.min_side, cfg.seed)
}

pub fn train(cfg: RunConfig, resume: Option<&Path>) -> Result<TrainSummary> {
    let manifest = corpus_manifest(&cfg)?;
    let mut trainer = Trainer::new(cfg, manifest, resume)?;
    trainer.run()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalOutcome {
    pub fid: f64,
    pub extractor: String,
    pub epoch: u64,
    pub csv: PathBuf,
}

pub struct EvalRequest<'a> {
    pub checkpoint: &'a Path,
    pub manifest: &'a Path,
    pub extractor: &'a str,
    pub extractor_weights: Option<&'a Path>,
    /// Defaults to the checkpoint's training setting.
    pub sample_size: Option<usize>,
    /// Defaults to the checkpoint's training seed.
    pub seed: Option<u64>,
    pub metrics_dir: &'a Path,
}

/// FID of the checkpoint's generator over the manifest's images; the value
/// is appended to the extractor's FID CSV.
pub fn eval(req: &EvalRequest<'_>) -> Result<EvalOutcome> {
    let manifest = CorpusManifest::read(req.manifest)?;
    let ckpt = checkpoint::load(req.checkpoint, Some(manifest.resolution))?;
    checkpoint::check_corpus(&ckpt.manifest, &manifest.hash());
    let m = &ckpt.manifest;
    let corpus = Corpus::new(manifest);
    let pool: Vec<usize> = (0..corpus.len()).collect();
    let extractor = metrics::extractor(req.extractor, req.extractor_weights)?;
    let mut fid = FidEvaluator::new(
        extractor,
        &pool,
        req.sample_size.unwrap_or(m.train.fid_sample_size),
        req.seed.unwrap_or(m.train.seed),
    )?;
    let value = match (&ckpt.state, m.kind) {
        (Some(state), GeneratorKind::Unet) => {
            fid.evaluate(&corpus, |p: &ExamplePair| Ok(state.generator.inpaint(&p.input)?))?
        }
        _ => fid.evaluate(&corpus, |p: &ExamplePair| Ok(p.target.clone()))?,
    };
    let csv = metrics::fid_csv_path(req.metrics_dir, req.extractor);
    CsvLog::open(&csv, FID_HEADER, None)?.fid_row(m.epoch, value)?;
    Ok(EvalOutcome { fid: value, extractor: req.extractor.into(), epoch: m.epoch, csv })
}

pub struct ExtendRequest<'a> {
    pub checkpoint: &'a Path,
    pub image: &'a Path,
    pub generations: usize,
    pub paste_back: bool,
    pub out_dir: &'a Path,
    pub contact_sheet: bool,
}

/// Continues the image for the requested generations and writes the series.
pub fn extend(req: &ExtendRequest<'_>) -> Result<Vec<PathBuf>> {
    if req.generations == 0 {
        return Err(Error::Usage("generations must be ≥ 1".into()));
    }
    let ckpt = checkpoint::load(req.checkpoint, None)?;
    let Some(state) = ckpt.state else {
        return Err(Error::checkpoint(req.checkpoint, "a target-oracle checkpoint has no generator to extend with"));
    };
    let img: ImageTensor = load_square(req.image, ckpt.manifest.resolution())?;
    let series = extend_series(&state.generator, &img, req.generations, req.paste_back)?;
    for (k, step) in series.steps.iter().enumerate() {
        if !artextend_core::border_filled(step) {
            log::warn!("generation {} still has chroma-green runs on its border", k + 1);
        }
    }
    export_series(&series, req.out_dir, req.contact_sheet)
}
