use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use artextend::commands::{self, EvalRequest, ExtendRequest};
use artextend::config::RunConfig;
use artextend::metrics::PIXEL_PROJECTION;

const CONFIG_KEYS: &str = "\
Config file (JSON; unknown keys are rejected). Relative paths are resolved
against the config file's directory. Every key is optional:

  seed                              u64, default 0 (env ARTEXTEND_SEED overrides)
  corpus.dir                        image directory, scanned when the manifest is missing
  corpus.manifest                   manifest path, default manifest.json
  corpus.min_side                   smallest accepted side, default = resolution
  corpus.resolution                 power of two >= 32, default 512
  corpus.split                      held-out fraction used for FID, default 0.0
  architecture.norm                 \"instance\" | \"none\", default instance
  architecture.dropout_rate         default 0.5
  architecture.dropout_blocks       decoder blocks with dropout, default 3
  architecture.conditioned          discriminator sees the input too, default true
  architecture.down_filters         explicit encoder filters (derived from resolution)
  architecture.up_filters           explicit decoder filters (mirror of the encoder)
  architecture.discriminator_filters       default [64, 128, 256]
  architecture.discriminator_head_filters  default 512
  train.lambda_l1                   default 100
  train.lr                          default 0.0002
  train.beta1 / train.beta2         default 0.5 / 0.999
  train.batch_size                  only 1 is supported
  train.epochs                      default 150
  train.max_steps                   stop after this many steps in total
  train.fid_interval                epochs between FID evaluations, default 10
  train.checkpoint_interval         epochs between checkpoints, default 10
  fid.extractor                     \"pixel-projection\" | \"inception-pool3\"
  fid.extractor_weights             safetensors weights for inception-pool3
  fid.sample_size                   images per FID evaluation, default 500
  paths.checkpoint_dir              default checkpoints
  paths.metrics_dir                 default metrics (losses.csv, fid_<extractor>.csv)
  paths.output_dir                  default output";

#[derive(Parser)]
#[command(name = "artextend", version, about = "Train a border-reconstruction GAN and extend paintings with it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Scan an image directory and write a corpus manifest.
    Prepare {
        #[arg(long)]
        input_dir: PathBuf,
        #[arg(long, default_value = "manifest.json")]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        size: usize,
        /// Defaults to --size.
        #[arg(long)]
        min_side: Option<u32>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train, or resume training, from a config file.
    #[command(after_help = CONFIG_KEYS)]
    Train(TrainArgs),
    /// Compute FID for a checkpoint and append it to the metrics CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = PIXEL_PROJECTION)]
        extractor: String,
        #[arg(long)]
        extractor_weights: Option<PathBuf>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "metrics")]
        metrics_dir: PathBuf,
    },
    /// Extend a painting for one or more generations.
    Extend {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 2)]
        generations: usize,
        /// Keep the generator's own centre instead of the known pixels.
        #[arg(long)]
        no_paste_back: bool,
        #[arg(long, default_value = "output")]
        out_dir: PathBuf,
        #[arg(long)]
        no_contact_sheet: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint directory, or a checkpoint root with a `latest` pointer.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    extractor: Option<String>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Prepare { input_dir, out, size, min_side, seed } => {
            let m = commands::prepare(&input_dir, &out, size, min_side, seed)?;
            println!("accepted {}, rejected {}", m.accepted.len(), m.rejected.len());
        }
        Command::Train(a) => {
            let mut cfg = RunConfig::load(&a.config)?;
            cfg.apply_env()?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            if a.max_steps.is_some() {
                cfg.train.max_steps = a.max_steps;
            }
            if let Some(x) = a.extractor {
                cfg.fid.extractor = x;
            }
            let summary = commands::train(cfg, a.resume.as_deref())?;
            match summary.last_fid {
                Some((epoch, fid)) => {
                    println!("trained to step {} (epoch {}); FID {fid:.6} at epoch {epoch}", summary.step, summary.epoch)
                }
                None => println!("trained to step {} (epoch {})", summary.step, summary.epoch),
            }
        }
        Command::Eval { checkpoint, manifest, extractor, extractor_weights, sample_size, seed, metrics_dir } => {
            let out = commands::eval(&EvalRequest {
                checkpoint: &checkpoint,
                manifest: &manifest,
                extractor: &extractor,
                extractor_weights: extractor_weights.as_deref(),
                sample_size,
                seed,
                metrics_dir: &metrics_dir,
            })?;
            println!("FID {:.6} ({})", out.fid, out.extractor);
        }
        Command::Extend { checkpoint, image, generations, no_paste_back, out_dir, no_contact_sheet } => {
            let files = commands::extend(&ExtendRequest {
                checkpoint: &checkpoint,
                image: &image,
                generations,
                paste_back: !no_paste_back,
                out_dir: &out_dir,
                contact_sheet: !no_contact_sheet,
            })
            .with_context(|| format!("extending {}", image.display()))?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<artextend::Error>().map_or(1, |e| e.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
