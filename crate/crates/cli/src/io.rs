//! File formats: grayscale PGM/PNG, flat little-endian `f64` dumps, CSV
//! tables and the JSON run manifest.
//!
//! A dump starts with a 32-byte header of four little-endian `u64` words
//! (magic, n, sample count, chain id), followed by the samples in
//! sample-major order, each an `n × n` column-major image.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, GrayImage, ImageEncoder};
use mlwg_core::Image;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// `MLWGDMP1` read as a little-endian word.
pub const DUMP_MAGIC: u64 = u64::from_le_bytes(*b"MLWGDMP1");
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub n: usize,
    pub count: usize,
    pub chain: u64,
    pub data: Vec<f64>,
}

pub fn write_dump(path: &Path, n: usize, count: usize, chain: u64, data: &[f64]) -> Result<(), CliError> {
    if data.len() != n * n * count {
        return Err(CliError::Runtime(format!(
            "dump {}: {} values for {count} images of side {n}",
            path.display(),
            data.len()
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for word in [DUMP_MAGIC, n as u64, count as u64, chain] {
        w.write_all(&word.to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dump(path: &Path) -> Result<Dump, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Runtime(format!("cannot read {}: {e}", path.display())))?;
    let bad = |what: &str| CliError::Validation(format!("{}: {what}", path.display()));
    if bytes.len() < HEADER_LEN {
        return Err(bad("file shorter than the dump header"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
    if word(0) != DUMP_MAGIC {
        return Err(bad("not a sample dump (bad magic)"));
    }
    let (n, count, chain) = (word(1) as usize, word(2) as usize, word(3));
    let expected = n
        .checked_mul(n)
        .and_then(|d| d.checked_mul(count))
        .and_then(|v| v.checked_mul(8))
        .ok_or_else(|| bad("header sizes overflow"))?;
    if bytes.len() - HEADER_LEN != expected {
        return Err(bad("payload length does not match the header"));
    }
    let data = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Dump { n, count, chain, data })
}

/// Loads an image. `.bin` files are single-image dumps kept at full
/// precision; anything else goes through the `image` crate and is scaled
/// from 8 or 16 bits to `[0, 1]`.
pub fn load_image(path: &Path) -> Result<Image, CliError> {
    if path.extension().is_some_and(|e| e == "bin") {
        let dump = read_dump(path)?;
        if dump.count != 1 {
            return Err(CliError::Validation(format!(
                "{}: expected one image, found {}",
                path.display(),
                dump.count
            )));
        }
        return Ok(Image::new(dump.n, dump.data)?);
    }
    let img = image::open(path)
        .map_err(|e| CliError::Validation(format!("cannot read image {}: {e}", path.display())))?
        .to_luma16();
    let (w, h) = img.dimensions();
    if w != h {
        return Err(CliError::Validation(format!(
            "{}: image is {w}×{h}, only square images are supported",
            path.display()
        )));
    }
    let n = w as usize;
    Ok(Image::from_fn(n, |row, col| {
        img.get_pixel(col as u32, row as u32).0[0] as f64 / 65535.0
    }))
}

fn to_gray(image: &Image, scale: f64) -> GrayImage {
    let n = image.n() as u32;
    GrayImage::from_fn(n, n, |col, row| {
        let v = (image.get(row as usize, col as usize) * scale).clamp(0.0, 1.0);
        image::Luma([(v * 255.0).round() as u8])
    })
}

/// Writes an 8-bit binary PGM (P5), clamping `value * scale` to `[0, 1]`.
pub fn save_pgm(path: &Path, image: &Image, scale: f64) -> Result<(), CliError> {
    let gray = to_gray(image, scale);
    let file = BufWriter::new(fs::File::create(path)?);
    PnmEncoder::new(file)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(gray.as_raw(), gray.width(), gray.height(), ExtendedColorType::L8)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn save_png(path: &Path, image: &Image, scale: f64) -> Result<(), CliError> {
    to_gray(image, scale)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// Scale that maps the largest value of a non-negative image to 1.
pub fn display_scale(image: &Image) -> f64 {
    let max = image.data().iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 && max.is_finite() {
        1.0 / max
    } else {
        1.0
    }
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    /// Output file name to SHA-256 of its contents.
    pub files: BTreeMap<String, String>,
}

/// Writes `manifest.json` listing checksums of `files` (relative to `dir`).
pub fn write_manifest(
    dir: &Path,
    command: &'static str,
    config_hash: String,
    seed: u64,
    config: BTreeMap<String, String>,
    files: &[String],
) -> Result<(), CliError> {
    let mut sums = BTreeMap::new();
    for f in files {
        sums.insert(f.clone(), sha256_file(&dir.join(f))?);
    }
    let manifest = Manifest {
        tool: "mlwg",
        version: env!("CARGO_PKG_VERSION"),
        command,
        config_hash,
        seed,
        config,
        files: sums,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.bin");
        let data: Vec<f64> = (0..8).map(|v| v as f64 * 0.25).collect();
        write_dump(&path, 2, 2, 7, &data).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 32 + 64);
        assert_eq!(&bytes[..8], b"MLWGDMP1");
        let back = read_dump(&path).unwrap();
        assert_eq!(back, Dump { n: 2, count: 2, chain: 7, data });
        fs::write(&path, &bytes[..40]).unwrap();
        assert!(read_dump(&path).is_err());
    }

    #[test]
    fn pgm_round_trip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pgm");
        let img = Image::from_fn(4, |r, c| (r * 4 + c) as f64 / 15.0);
        save_pgm(&path, &img, 1.0).unwrap();
        assert!(fs::read(&path).unwrap().starts_with(b"P5"));
        let back = load_image(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn emission_clamps() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let img = Image::new(1, vec![1.7]).unwrap();
        save_png(&path, &img, 1.0).unwrap();
        assert_eq!(load_image(&path).unwrap().data()[0], 1.0);
    }
}
