//! Checkpoint directories: `manifest.json` with configs, counters and RNG
//! position, plus `weights.safetensors` holding both networks and both
//! optimizers' moments as little-endian `f32`.

use std::fs;
use std::path::{Path, PathBuf};

use artextend_core::nn::Param;
use artextend_core::optim::Moments;
use artextend_core::{DiscriminatorConfig, GeneratorConfig, Parameters, TrainConfig, TrainState};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT: &str = "artextend-checkpoint";
pub const VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const WEIGHTS_FILE: &str = "weights.safetensors";
/// File in a checkpoint root naming the most recent checkpoint directory.
pub const LATEST_FILE: &str = "latest";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    Unet,
    /// Test stub that reproduces the ground truth; carries no weights.
    TargetOracle,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    /// Hex-encoded 32-byte ChaCha key.
    pub key: String,
    pub stream: u64,
    /// Decimal; exceeds the JSON integer range.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { key: hex::encode(rng.get_seed()), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Option<ChaCha8Rng> {
        let key: [u8; 32] = hex::decode(&self.key).ok()?.try_into().ok()?;
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().ok()?);
        Some(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub kind: GeneratorKind,
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
    pub train: TrainConfig,
    /// Fully completed epochs.
    pub epoch: u64,
    /// Completed training steps.
    pub step: u64,
    pub rng: Option<RngState>,
    pub optimizer_steps: [u64; 2],
    pub corpus_sha256: Option<String>,
    pub weights_sha256: Option<String>,
}

impl CheckpointManifest {
    pub fn resolution(&self) -> usize {
        self.generator.resolution
    }
}

#[derive(Debug)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    /// Present for `unet` checkpoints.
    pub state: Option<TrainState<f32>>,
}

/// Name of the directory a checkpoint is saved to inside the root.
pub fn checkpoint_name(epoch: u64, step: u64, epoch_boundary: bool) -> String {
    if epoch_boundary {
        format!("epoch_{epoch:04}")
    } else {
        format!("step_{step:08}")
    }
}

fn f32_bytes(v: &[f32]) -> Vec<u8> {
    v.iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn tensors(state: &TrainState<f32>) -> Vec<(String, Vec<u8>, usize)> {
    let mut out = Vec::new();
    let mut push_net = |prefix: &str, net: &dyn Fn(&mut dyn FnMut(&str, &Param<f32>))| {
        net(&mut |name, p| out.push((format!("{prefix}.{name}"), f32_bytes(&p.value), p.len())));
    };
    push_net("generator", &|f| state.generator.visit("", f));
    push_net("discriminator", &|f| state.discriminator.visit("", f));
    for (prefix, moments) in [("opt_g", &state.opt_g.moments), ("opt_d", &state.opt_d.moments)] {
        for m in moments {
            out.push((format!("{prefix}.m.{}", m.name), f32_bytes(&m.m), m.m.len()));
            out.push((format!("{prefix}.v.{}", m.name), f32_bytes(&m.v), m.v.len()));
        }
    }
    out
}

fn write_atomic_dir(dir: &Path, files: &[(&str, &[u8])]) -> Result<()> {
    let parent = dir.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(Error::io(parent))?;
    let name = dir.file_name().ok_or_else(|| Error::checkpoint(dir, "path has no final component"))?;
    let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(Error::io(&tmp))?;
    }
    fs::create_dir(&tmp).map_err(Error::io(&tmp))?;
    for (file, bytes) in files {
        let path = tmp.join(file);
        fs::write(&path, bytes).map_err(Error::io(&path))?;
        fs::File::open(&path).and_then(|f| f.sync_all()).map_err(Error::io(&path))?;
    }
    let old = parent.join(format!(".{}.old-{}", name.to_string_lossy(), std::process::id()));
    let replaced = dir.exists();
    if replaced {
        fs::rename(dir, &old).map_err(Error::io(dir))?;
    }
    fs::rename(&tmp, dir).map_err(Error::io(dir))?;
    if replaced {
        fs::remove_dir_all(&old).map_err(Error::io(&old))?;
    }
    Ok(())
}

/// Writes a complete checkpoint of `state` to `dir`, replacing any
/// previous content only once the new one is fully on disk.
pub fn save(
    dir: &Path,
    state: &TrainState<f32>,
    train: &TrainConfig,
    epoch: u64,
    corpus_sha256: Option<String>,
) -> Result<CheckpointManifest> {
    let tensors = tensors(state);
    let views: Vec<(String, TensorView<'_>)> = tensors
        .iter()
        .map(|(name, bytes, len)| {
            let view = TensorView::new(Dtype::F32, vec![*len], bytes).expect("length matches shape");
            (name.clone(), view)
        })
        .collect();
    let weights = safetensors::serialize(views, &None).map_err(|e| Error::checkpoint(dir, e.to_string()))?;
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        kind: GeneratorKind::Unet,
        generator: state.generator.config().clone(),
        discriminator: state.discriminator.config().clone(),
        train: train.clone(),
        epoch,
        step: state.step,
        rng: Some(RngState::capture(&state.rng)),
        optimizer_steps: [state.opt_g.steps, state.opt_d.steps],
        corpus_sha256,
        weights_sha256: Some(hex::encode(Sha256::digest(&weights))),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic_dir(dir, &[(WEIGHTS_FILE, &weights), (MANIFEST_FILE, json.as_bytes())])?;
    Ok(manifest)
}

/// Writes a weightless checkpoint whose generator returns the ground truth.
pub fn save_target_oracle(dir: &Path, resolution: usize, train: &TrainConfig) -> Result<CheckpointManifest> {
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        version: VERSION,
        kind: GeneratorKind::TargetOracle,
        generator: GeneratorConfig::for_resolution(resolution)?,
        discriminator: DiscriminatorConfig::default(),
        train: train.clone(),
        epoch: 0,
        step: 0,
        rng: None,
        optimizer_steps: [0, 0],
        corpus_sha256: None,
        weights_sha256: None,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic_dir(dir, &[(MANIFEST_FILE, json.as_bytes())])?;
    Ok(manifest)
}

/// Records `name` as the most recent checkpoint under `root`.
pub fn mark_latest(root: &Path, name: &str) -> Result<()> {
    let path = root.join(LATEST_FILE);
    let tmp = root.join(format!(".{LATEST_FILE}.tmp-{}", std::process::id()));
    fs::write(&tmp, format!("{name}\n")).map_err(Error::io(&tmp))?;
    fs::rename(&tmp, &path).map_err(Error::io(&path))
}

/// A checkpoint directory, or a checkpoint root whose `latest` file names one.
pub fn resolve(path: &Path) -> Result<PathBuf> {
    if path.join(MANIFEST_FILE).is_file() {
        return Ok(path.into());
    }
    let latest = path.join(LATEST_FILE);
    if latest.is_file() {
        let name = fs::read_to_string(&latest).map_err(Error::io(&latest))?;
        let dir = path.join(name.trim());
        if dir.join(MANIFEST_FILE).is_file() {
            return Ok(dir);
        }
    }
    Err(Error::checkpoint(path, format!("no {MANIFEST_FILE} here and no valid {LATEST_FILE} pointer")))
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(Error::io(&path))?;
    let manifest: CheckpointManifest =
        serde_json::from_str(&text).map_err(|e| Error::checkpoint(dir, format!("invalid manifest: {e}")))?;
    if manifest.format != FORMAT || manifest.version != VERSION {
        return Err(Error::checkpoint(
            dir,
            format!(
                "unsupported format {} version {} (expected {FORMAT} version {VERSION})",
                manifest.format, manifest.version
            ),
        ));
    }
    Ok(manifest)
}

fn read_f32(st: &SafeTensors<'_>, name: &str, len: usize, dir: &Path) -> Result<Vec<f32>> {
    let view = st.tensor(name).map_err(|_| Error::checkpoint(dir, format!("missing tensor {name}")))?;
    if view.dtype() != Dtype::F32 || view.shape().iter().product::<usize>() != len {
        return Err(Error::checkpoint(
            dir,
            format!("tensor {name}: expected {len} f32 values, found {:?} {:?}", view.dtype(), view.shape()),
        ));
    }
    Ok(view.data().chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
}

fn fill_net<P: Parameters<f32>>(net: &mut P, prefix: &str, st: &SafeTensors<'_>, dir: &Path) -> Result<()> {
    let mut err = None;
    net.visit_mut("", &mut |name, p| {
        if err.is_some() {
            return;
        }
        match read_f32(st, &format!("{prefix}.{name}"), p.len(), dir) {
            Ok(v) => p.value = v,
            Err(e) => err = Some(e),
        }
    });
    err.map_or(Ok(()), Err)
}

fn fill_moments(moments: &mut [Moments<f32>], prefix: &str, st: &SafeTensors<'_>, dir: &Path) -> Result<()> {
    for m in moments {
        m.m = read_f32(st, &format!("{prefix}.m.{}", m.name), m.m.len(), dir)?;
        m.v = read_f32(st, &format!("{prefix}.v.{}", m.name), m.v.len(), dir)?;
    }
    Ok(())
}

/// Loads the checkpoint at `path` (or the latest one under it). When
/// `resolution` is given, a checkpoint for another resolution is refused.
pub fn load(path: &Path, resolution: Option<usize>) -> Result<Checkpoint> {
    let dir = resolve(path)?;
    let manifest = read_manifest(&dir)?;
    if let Some(s) = resolution {
        if manifest.resolution() != s {
            return Err(Error::checkpoint(
                &dir,
                format!("trained at resolution {} but {s} was requested", manifest.resolution()),
            ));
        }
    }
    if manifest.kind == GeneratorKind::TargetOracle {
        return Ok(Checkpoint { manifest, state: None });
    }
    let wpath = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&wpath).map_err(Error::io(&wpath))?;
    if let Some(expected) = &manifest.weights_sha256 {
        if &hex::encode(Sha256::digest(&bytes)) != expected {
            return Err(Error::checkpoint(&dir, "weights file does not match its recorded hash"));
        }
    }
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::checkpoint(&dir, e.to_string()))?;

    let mut state = TrainState::<f32>::new(manifest.generator.clone(), manifest.discriminator.clone(), &manifest.train)?;
    fill_net(&mut state.generator, "generator", &st, &dir)?;
    fill_net(&mut state.discriminator, "discriminator", &st, &dir)?;
    fill_moments(&mut state.opt_g.moments, "opt_g", &st, &dir)?;
    fill_moments(&mut state.opt_d.moments, "opt_d", &st, &dir)?;
    let mut expected = 2 * (state.opt_g.moments.len() + state.opt_d.moments.len());
    state.generator.visit("", &mut |_, _| expected += 1);
    state.discriminator.visit("", &mut |_, _| expected += 1);
    if st.len() != expected {
        return Err(Error::checkpoint(&dir, "weights file holds tensors this architecture does not have"));
    }
    [state.opt_g.steps, state.opt_d.steps] = manifest.optimizer_steps;
    state.step = manifest.step;
    state.rng = manifest
        .rng
        .as_ref()
        .and_then(RngState::restore)
        .ok_or_else(|| Error::checkpoint(&dir, "missing or malformed rng state"))?;
    Ok(Checkpoint { manifest, state: Some(state) })
}

/// Warns when the checkpoint was trained on a different corpus manifest.
pub fn check_corpus(manifest: &CheckpointManifest, corpus_sha256: &str) {
    if let Some(h) = &manifest.corpus_sha256 {
        if h != corpus_sha256 {
            log::warn!("checkpoint was trained on corpus manifest {h}, now using {corpus_sha256}");
        }
    }
}
