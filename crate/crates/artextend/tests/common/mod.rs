#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{ImageFormat, Rgb, RgbImage};

/// Smooth colour field with some structure, varied by `k`.
pub fn painting_rgb(w: u32, h: u32, k: u32) -> RgbImage {
    let kf = k as f32;
    RgbImage::from_fn(w, h, |x, y| {
        let (u, v) = (y as f32 / h as f32, x as f32 / w as f32);
        let ch = |c: f32| {
            let s = 0.5 + 0.4 * (6.0 * u + 0.7 * kf + 1.3 * c).sin() * (4.0 * v - 0.5 * kf).cos();
            (s.clamp(0.0, 1.0) * 255.0).round() as u8
        };
        Rgb([ch(0.0), ch(1.0), ch(2.0)])
    })
}

pub fn write_painting(dir: &Path, name: &str, w: u32, h: u32, k: u32) -> PathBuf {
    let path = dir.join(name);
    let format = ImageFormat::from_path(&path).unwrap();
    painting_rgb(w, h, k).save_with_format(&path, format).unwrap();
    path
}

/// `n` PNG paintings of side `side` in `dir`.
pub fn corpus(dir: &Path, n: u32, side: u32) -> Vec<PathBuf> {
    std::fs::create_dir_all(dir).unwrap();
    (0..n).map(|k| write_painting(dir, &format!("p{k:02}.png"), side, side, k)).collect()
}

/// Config for a small, fast run at 64x64 with everything under `root`.
pub fn desk_config(root: &Path, epochs: u64, extra_train: &str) -> PathBuf {
    let text = format!(
        r#"{{
  "seed": 7,
  "corpus": {{ "dir": "corpus", "manifest": "manifest.json", "resolution": 64 }},
  "architecture": {{
    "down_filters": [8, 16, 16, 16],
    "discriminator_filters": [8, 16, 16],
    "discriminator_head_filters": 16
  }},
  "train": {{ "epochs": {epochs}, "fid_interval": 1, "checkpoint_interval": 1{extra_train} }},
  "fid": {{ "sample_size": 8 }}
}}
"#
    );
    let path = root.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_artextend")).args(args).env("RUST_LOG", "warn").env_remove("ARTEXTEND_SEED").output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}
