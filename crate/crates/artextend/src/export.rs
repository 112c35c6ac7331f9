//! PNG export of continuation series.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use artextend_core::{GenerationSeries, ImageTensor};
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};

use crate::error::{Error, Result};

pub const CONTACT_SHEET: &str = "series.png";

/// Encodes 8-bit RGB with fixed compression and filter settings, so equal
/// pixels always give equal bytes.
pub fn write_png(path: &Path, img: &ImageTensor) -> Result<()> {
    write_rgb8(path, img.width() as u32, img.height() as u32, &img.to_rgb8())
}

fn write_rgb8(path: &Path, w: u32, h: u32, rgb: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(Error::io(path))?;
    let mut out = BufWriter::new(file);
    PngEncoder::new_with_quality(&mut out, CompressionType::Default, FilterType::Adaptive)
        .write_image(rgb, w, h, ExtendedColorType::Rgb8)
        .map_err(|source| Error::Encode { path: path.into(), source })?;
    out.into_inner().map_err(|e| Error::Io { path: path.into(), source: e.into_error() })?;
    Ok(())
}

pub fn generation_file(k: usize) -> String {
    format!("gen_{k:03}.png")
}

/// Writes `gen_000.png` (the original) through `gen_N.png`, plus a
/// left-to-right contact sheet when `contact_sheet` is set. Creates
/// `out_dir` if needed.
pub fn export_series(series: &GenerationSeries, out_dir: &Path, contact_sheet: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(Error::io(out_dir))?;
    let mut files = Vec::new();
    for (k, img) in series.images().enumerate() {
        let path = out_dir.join(generation_file(k));
        write_png(&path, img)?;
        files.push(path);
    }
    if contact_sheet {
        let s = series.original.height();
        let count = series.generations() + 1;
        let (w, h) = (s * count, s);
        let mut sheet = vec![0u8; 3 * w * h];
        for (k, img) in series.images().enumerate() {
            let rgb = img.to_rgb8();
            for y in 0..s {
                let dst = 3 * (y * w + k * s);
                sheet[dst..dst + 3 * s].copy_from_slice(&rgb[3 * y * s..3 * (y + 1) * s]);
            }
        }
        let path = out_dir.join(CONTACT_SHEET);
        write_rgb8(&path, w as u32, h as u32, &sheet)?;
        files.push(path);
    }
    Ok(files)
}
