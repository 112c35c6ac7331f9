//! The training loop: epochs over the corpus, per-step loss rows, FID at
//! epoch intervals and periodic checkpoints.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use artextend_core::pairs::epoch_order;
use artextend_core::{ExamplePair, Inpainter, LossRecord, TrainState};

use crate::checkpoint::{self, checkpoint_name};
use crate::config::RunConfig;
use crate::corpus::{split_indices, Corpus, CorpusManifest};
use crate::error::{Error, Result};
use crate::metrics::{self, first_field, CsvLog, FidEvaluator, FID_HEADER, LOSS_HEADER};

pub const LOCK_FILE: &str = ".lock";

/// Exclusive advisory lock on a checkpoint directory, released on drop or
/// when the process dies.
#[derive(Debug)]
pub struct DirLock {
    _file: File,
}

impl DirLock {
    pub fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(Error::io(dir))?;
        let path = dir.join(LOCK_FILE);
        let file = File::options().create(true).truncate(false).write(true).open(&path).map_err(Error::io(&path))?;
        match file.try_lock() {
            Ok(()) => Ok(Self { _file: file }),
            Err(std::fs::TryLockError::WouldBlock) => Err(Error::Locked(path)),
            Err(std::fs::TryLockError::Error(e)) => Err(Error::Io { path, source: e }),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub step: u64,
    /// Completed epochs.
    pub epoch: u64,
    pub last_fid: Option<(u64, f64)>,
    pub last_checkpoint: Option<PathBuf>,
}

pub struct Trainer {
    cfg: RunConfig,
    corpus: Corpus,
    corpus_hash: String,
    train_idx: Vec<usize>,
    state: TrainState<f32>,
    fid: FidEvaluator,
    losses: CsvLog,
    fid_log: CsvLog,
    last_fid: Option<(u64, f64)>,
    last_checkpoint: Option<PathBuf>,
    _lock: DirLock,
}

impl Trainer {
    /// Fresh run, or a continuation of the checkpoint at `resume`. On resume
    /// the CSV logs are trimmed to the checkpoint's step so replayed steps
    /// are not duplicated.
    pub fn new(cfg: RunConfig, manifest: CorpusManifest, resume: Option<&Path>) -> Result<Self> {
        cfg.validate()?;
        if manifest.resolution != cfg.corpus.resolution {
            return Err(Error::Usage(format!(
                "corpus manifest was prepared at resolution {} but the config asks for {}",
                manifest.resolution, cfg.corpus.resolution
            )));
        }
        let lock = DirLock::acquire(&cfg.paths.checkpoint_dir)?;
        let corpus_hash = manifest.hash();
        let corpus = Corpus::new(manifest);
        let (train_idx, holdout) = split_indices(corpus.len(), cfg.corpus.split, cfg.seed);
        let fid_pool = if holdout.len() >= 2 { holdout } else { train_idx.clone() };

        let state = match resume {
            Some(path) => {
                let ckpt = checkpoint::load(path, Some(cfg.corpus.resolution))?;
                checkpoint::check_corpus(&ckpt.manifest, &corpus_hash);
                if ckpt.manifest.generator != cfg.generator()? || ckpt.manifest.discriminator != cfg.discriminator()? {
                    return Err(Error::checkpoint(path, "architecture differs from the run config"));
                }
                let mut state = ckpt.state.ok_or_else(|| Error::checkpoint(path, "stub checkpoints cannot be trained"))?;
                state.lambda_l1 = cfg.train.lambda_l1;
                let adam = cfg.train_config().adam();
                state.opt_g.config = adam;
                state.opt_d.config = adam;
                log::info!("resuming from {} at step {}", path.display(), state.step);
                state
            }
            None => TrainState::new(cfg.generator()?, cfg.discriminator()?, &cfg.train_config())?,
        };

        let step = state.step;
        let done_epochs = step / train_idx.len() as u64;
        let extractor = metrics::extractor(&cfg.fid.extractor, cfg.fid.extractor_weights.as_deref())?;
        let fid = FidEvaluator::new(extractor, &fid_pool, cfg.fid.sample_size, cfg.seed)?;
        let keep_steps = move |l: &str| first_field(l).is_some_and(|s| s <= step);
        let keep_epochs = move |l: &str| first_field(l).is_some_and(|e| e <= done_epochs);
        let losses = CsvLog::open(&metrics::loss_csv_path(&cfg.paths.metrics_dir), LOSS_HEADER, Some(&keep_steps))?;
        let fid_path = metrics::fid_csv_path(&cfg.paths.metrics_dir, fid.extractor_name());
        let fid_log = CsvLog::open(&fid_path, FID_HEADER, Some(&keep_epochs))?;

        Ok(Self {
            cfg,
            corpus,
            corpus_hash,
            train_idx,
            state,
            fid,
            losses,
            fid_log,
            last_fid: None,
            last_checkpoint: None,
            _lock: lock,
        })
    }

    pub fn state(&self) -> &TrainState<f32> {
        &self.state
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn steps_per_epoch(&self) -> u64 {
        self.train_idx.len() as u64
    }

    /// Total steps of the configured run.
    pub fn total_steps(&self) -> u64 {
        let full = self.cfg.train.epochs * self.steps_per_epoch();
        self.cfg.train.max_steps.map_or(full, |m| m.min(full))
    }

    /// Corpus index and 1-based epoch of the step after `done` completed steps.
    fn schedule(&self, done: u64) -> (usize, u64) {
        let n = self.steps_per_epoch();
        let epoch = done / n + 1;
        let order = epoch_order(self.train_idx.len(), self.cfg.seed, epoch);
        (self.train_idx[order[(done % n) as usize]], epoch)
    }

    /// One optimization step on the next pair in the schedule.
    pub fn step(&mut self) -> Result<LossRecord> {
        let (i, epoch) = self.schedule(self.state.step);
        let pair = self.corpus.pair(i)?;
        let record = self.state.train_step(&pair, epoch)?;
        self.losses.loss_row(&record)?;
        Ok(record)
    }

    /// FID of the current generator; not logged.
    pub fn evaluate_fid(&mut self) -> Result<f64> {
        let g = &self.state.generator;
        self.fid.evaluate(&self.corpus, |p: &ExamplePair| Ok(g.inpaint(&p.input)?))
    }

    pub fn save_checkpoint(&mut self) -> Result<PathBuf> {
        let n = self.steps_per_epoch();
        let step = self.state.step;
        let name = checkpoint_name(step / n, step, step.is_multiple_of(n));
        let dir = self.cfg.paths.checkpoint_dir.join(&name);
        checkpoint::save(&dir, &self.state, &self.cfg.train_config(), step / n, Some(self.corpus_hash.clone()))?;
        checkpoint::mark_latest(&self.cfg.paths.checkpoint_dir, &name)?;
        log::info!("saved checkpoint {}", dir.display());
        self.last_checkpoint = Some(dir.clone());
        Ok(dir)
    }

    /// Trains until the configured epochs (or `max_steps`) are done.
    pub fn run(&mut self) -> Result<TrainSummary> {
        self.run_until(self.total_steps())
    }

    /// Trains until `target` steps are complete. Epoch-end work (FID,
    /// checkpoints) happens on epoch boundaries; a checkpoint is also
    /// written when stopping mid-epoch.
    pub fn run_until(&mut self, target: u64) -> Result<TrainSummary> {
        let n = self.steps_per_epoch();
        let t = self.cfg.train.clone();
        let started = self.state.step;
        let clock = std::time::Instant::now();
        while self.state.step < target {
            let r = self.step()?;
            if r.step % n == 0 {
                let epoch = r.step / n;
                log::info!(
                    "epoch {epoch} step {} d {:.4} g_adv {:.4} l1 {:.4} ({:.1}s)",
                    r.step,
                    r.d_loss,
                    r.g_adv_loss,
                    r.g_l1_loss,
                    clock.elapsed().as_secs_f64()
                );
                if epoch.is_multiple_of(t.fid_interval) {
                    let fid = self.evaluate_fid()?;
                    self.fid_log.fid_row(epoch, fid)?;
                    log::info!("epoch {epoch} FID ({}) {fid:.6}", self.fid.extractor_name());
                    self.last_fid = Some((epoch, fid));
                }
                if epoch.is_multiple_of(t.checkpoint_interval) || epoch == t.epochs {
                    self.save_checkpoint()?;
                }
            }
        }
        if !self.state.step.is_multiple_of(n) && self.state.step > started {
            self.save_checkpoint()?;
        }
        Ok(self.summary())
    }

    pub fn summary(&self) -> TrainSummary {
        TrainSummary {
            step: self.state.step,
            epoch: self.state.step / self.steps_per_epoch(),
            last_fid: self.last_fid,
            last_checkpoint: self.last_checkpoint.clone(),
        }
    }
}
