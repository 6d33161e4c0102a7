//! IDX files as used by MNIST.
//!
//! All integers are big-endian. Images: magic `0x00000803`, then the
//! dimensions N, rows, cols, then N·rows·cols unsigned bytes (scaled by
//! 1/255 on load). Labels: magic `0x00000801`, count N, then N bytes.
//! Float image sidecars use magic `0x00000D03` with big-endian f64 pixels.
//! Gzipped files are recognised by their `1f 8b` prefix.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{Array2, ArrayView2};

use super::DataError;

pub const IMAGES_U8_MAGIC: u32 = 0x0000_0803;
pub const IMAGES_F64_MAGIC: u32 = 0x0000_0D03;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
/// Labels are MNIST digits.
pub const MAX_LABEL: u8 = 9;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or(DataError::Truncated { expected: at + 4, found: bytes.len() })
}

fn payload_len(dims: &[usize], width: usize) -> Result<usize, DataError> {
    dims.iter()
        .try_fold(width, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| DataError::DimensionMismatch(format!("dimensions {dims:?} overflow")))
}

fn check_payload(bytes: &[u8], header: usize, expected: usize) -> Result<(), DataError> {
    let found = bytes.len() - header;
    if found < expected {
        return Err(DataError::Truncated { expected: header + expected, found: bytes.len() });
    }
    if found > expected {
        return Err(DataError::DimensionMismatch(format!(
            "header declares {expected} payload bytes but file has {found}"
        )));
    }
    Ok(())
}

/// Parses IDX3 image bytes into an `N × (rows·cols)` matrix in `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>, DataError> {
    let magic = be_u32(bytes, 0)?;
    let width = match magic {
        IMAGES_U8_MAGIC => 1,
        IMAGES_F64_MAGIC => 8,
        found => return Err(DataError::WrongMagic { expected: IMAGES_U8_MAGIC, found }),
    };
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let d = rows
        .checked_mul(cols)
        .filter(|&d| d > 0)
        .ok_or_else(|| DataError::DimensionMismatch(format!("invalid image shape {rows}x{cols}")))?;
    check_payload(bytes, 16, payload_len(&[n, d], width)?)?;
    let body = &bytes[16..];
    let pixels: Vec<f64> = if width == 1 {
        body.iter().map(|&b| f64::from(b) / 255.0).collect()
    } else {
        body.chunks_exact(8).map(|c| f64::from_be_bytes(c.try_into().expect("8 bytes"))).collect()
    };
    if let Some(pos) = pixels.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(DataError::PixelOutOfRange { sample: pos / d, value: pixels[pos] });
    }
    Ok(Array2::from_shape_vec((n, d), pixels).expect("payload length checked"))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>, DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::WrongMagic { expected: LABELS_MAGIC, found: magic });
    }
    let n = be_u32(bytes, 4)? as usize;
    check_payload(bytes, 8, n)?;
    bytes[8..]
        .iter()
        .enumerate()
        .map(|(index, &b)| {
            if b > MAX_LABEL {
                Err(DataError::LabelOutOfRange { index, value: b as usize, max: MAX_LABEL as usize })
            } else {
                Ok(b as usize)
            }
        })
        .collect()
}

/// Raw file contents, gunzipped when the gzip magic is present.
pub fn read_maybe_gz(path: impl AsRef<Path>) -> Result<Vec<u8>, DataError> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Writes `bytes`, gzipped if the path ends in `.gz`.
pub fn write_maybe_gz(path: impl AsRef<Path>, bytes: &[u8]) -> Result<(), DataError> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e == "gz") {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes)?;
        fs::write(path, enc.finish()?)?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Array2<f64>, DataError> {
    parse_idx_images(&read_maybe_gz(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<usize>, DataError> {
    parse_idx_labels(&read_maybe_gz(path)?)
}

/// Square image side for `d` pixels, or `1 × d` when `d` is not square.
pub fn image_shape(d: usize) -> (usize, usize) {
    let side = (d as f64).sqrt().round() as usize;
    if side * side == d {
        (side, side)
    } else {
        (1, d)
    }
}

fn header(magic: u32, dims: &[usize]) -> Vec<u8> {
    let mut out = magic.to_be_bytes().to_vec();
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out
}

/// Quantises pixels to `round(255·x)` bytes.
pub fn encode_idx_images_u8(images: ArrayView2<'_, f64>) -> Vec<u8> {
    let (rows, cols) = image_shape(images.ncols());
    let mut out = header(IMAGES_U8_MAGIC, &[images.nrows(), rows, cols]);
    out.extend(images.iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

/// Lossless f64 sidecar.
pub fn encode_idx_images_f64(images: ArrayView2<'_, f64>) -> Vec<u8> {
    let (rows, cols) = image_shape(images.ncols());
    let mut out = header(IMAGES_F64_MAGIC, &[images.nrows(), rows, cols]);
    for v in images.iter() {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out
}

pub fn encode_idx_labels(labels: &[usize]) -> Result<Vec<u8>, DataError> {
    let mut out = header(LABELS_MAGIC, &[labels.len()]);
    for (index, &y) in labels.iter().enumerate() {
        if y > MAX_LABEL as usize {
            return Err(DataError::LabelOutOfRange { index, value: y, max: MAX_LABEL as usize });
        }
        out.push(y as u8);
    }
    Ok(out)
}
