//! Image directory scanning, square loading and the per-epoch pair stream.

use std::fs;
use std::path::{Path, PathBuf};

use artextend_core::arch::check_resolution;
use artextend_core::pairs::epoch_order;
use artextend_core::{make_training_pair, ExamplePair, ImageTensor};
use image::{ImageReader, RgbImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};

/// Reason recorded for images below the minimum side.
pub const TOO_SMALL: &str = "too small";

/// Decoded images are cached in memory up to this many bytes.
const CACHE_BUDGET: usize = 512 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRecord {
    /// Path relative to the corpus root, `/`-separated.
    pub path: String,
    pub w: u32,
    pub h: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rejection {
    pub path: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    /// Directory the record paths are relative to.
    pub root: PathBuf,
    pub resolution: usize,
    pub seed: u64,
    pub accepted: Vec<FileRecord>,
    pub rejected: Vec<Rejection>,
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(Error::io(parent))?;
        }
        fs::write(path, self.to_json()).map_err(Error::io(path))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(Error::io(path))?;
        serde_json::from_str(&text).map_err(|e| Error::Config { path: path.into(), message: e.to_string() })
    }

    /// SHA-256 of the serialized manifest.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn absolute(&self, record: &FileRecord) -> PathBuf {
        self.root.join(&record.path)
    }
}

/// Walks `dir` in lexicographic order of relative path and sorts every file
/// into accepted or rejected. Files that fail to decode are rejected, never
/// fatal.
pub fn scan_corpus(dir: &Path, min_side: u32, resolution: usize, seed: u64) -> Result<CorpusManifest> {
    check_resolution(resolution)?;
    if !dir.is_dir() {
        return Err(Error::MissingDirectory(dir.into()));
    }
    let root = dir.canonicalize().map_err(Error::io(dir))?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in WalkDir::new(&root).follow_links(true) {
        let entry = entry.map_err(|e| Error::Io {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| root.clone()),
            source: e.into(),
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(&root).expect("walk stays under root");
        let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
        files.push((key, entry.path().to_path_buf()));
    }
    files.sort();

    let mut accepted = Vec::new();
    let mut rejected = Vec::new();
    for (key, path) in files {
        match decode_rgb(&path) {
            Err(e) => {
                log::debug!("rejecting {key}: {e}");
                rejected.push(Rejection { path: key, reason: format!("unreadable: {}", error_reason(&e)) });
            }
            Ok(img) if img.width().min(img.height()) < min_side => rejected.push(Rejection {
                path: key,
                reason: format!("{TOO_SMALL}: {}x{} below {min_side}", img.width(), img.height()),
            }),
            Ok(img) => accepted.push(FileRecord { path: key, w: img.width(), h: img.height() }),
        }
    }
    if accepted.is_empty() {
        return Err(Error::EmptyCorpus(dir.into()));
    }
    Ok(CorpusManifest { root, resolution, seed, accepted, rejected })
}

fn error_reason(e: &Error) -> String {
    match e {
        Error::Decode { source, .. } => source.to_string(),
        Error::Io { source, .. } => source.to_string(),
        other => other.to_string(),
    }
}

fn decode_rgb(path: &Path) -> Result<RgbImage> {
    let reader = ImageReader::open(path).map_err(Error::io(path))?;
    let reader = reader.with_guessed_format().map_err(Error::io(path))?;
    let img = reader.decode().map_err(|source| Error::Decode { path: path.into(), source })?;
    Ok(img.to_rgb8())
}

/// Centre square of the larger dimension (offset floored), bilinear resize
/// to `size x size`, then normalization to `[-1, 1]`. Alpha is dropped.
pub fn load_square(path: &Path, size: usize) -> Result<ImageTensor> {
    let rgb = decode_rgb(path)?;
    let img = ImageTensor::from_rgb8(rgb.width() as usize, rgb.height() as usize, rgb.as_raw())?;
    let square = img.centre_square();
    Ok(if square.height() == size { square } else { square.resize_bilinear(size, size) })
}

/// A scanned corpus with lazy, optionally cached, image loading.
#[derive(Debug)]
pub struct Corpus {
    manifest: CorpusManifest,
    cache: Option<Vec<std::sync::OnceLock<ImageTensor>>>,
}

impl Corpus {
    pub fn new(manifest: CorpusManifest) -> Self {
        let s = manifest.resolution;
        let bytes = manifest.accepted.len() * 3 * s * s * std::mem::size_of::<f32>();
        let cache = (bytes <= CACHE_BUDGET).then(|| (0..manifest.accepted.len()).map(|_| Default::default()).collect());
        Self { manifest, cache }
    }

    pub fn manifest(&self) -> &CorpusManifest {
        &self.manifest
    }

    pub fn len(&self) -> usize {
        self.manifest.accepted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, i: usize) -> Result<ImageTensor> {
        let load = || load_square(&self.manifest.absolute(&self.manifest.accepted[i]), self.manifest.resolution);
        match &self.cache {
            Some(cache) => {
                if let Some(img) = cache[i].get() {
                    return Ok(img.clone());
                }
                let img = load()?;
                Ok(cache[i].get_or_init(|| img).clone())
            }
            None => load(),
        }
    }

    pub fn pair(&self, i: usize) -> Result<ExamplePair> {
        Ok(make_training_pair(&self.image(i)?, self.manifest.accepted[i].path.clone())?)
    }

    /// Every accepted image once, in an order that depends only on
    /// `(seed, epoch)`.
    pub fn iterate_pairs(&self, seed: u64, epoch: u64) -> impl Iterator<Item = Result<ExamplePair>> + '_ {
        epoch_order(self.len(), seed, epoch).into_iter().map(move |i| self.pair(i))
    }
}

/// Splits `0..n` into training and held-out indices. The held-out part is a
/// seeded sample of `round(n * fraction)` indices, never all of them.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let k = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let holdout = artextend_core::sample_indices(n, k, seed ^ 0x5711_7000);
    let train = (0..n).filter(|i| holdout.binary_search(i).is_err()).collect();
    (train, holdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_never_empties_training_set() {
        let (train, held) = split_indices(3, 1.0, 0);
        assert_eq!((train.len(), held.len()), (1, 2));
        let (train, held) = split_indices(10, 0.0, 0);
        assert_eq!((train.len(), held.len()), (10, 0));
        let (train, held) = split_indices(10, 0.2, 4);
        assert_eq!(held.len(), 2);
        assert!(held.iter().all(|h| !train.contains(h)));
    }
}
