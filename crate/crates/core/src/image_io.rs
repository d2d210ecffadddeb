//! PFM and 16-bit PGM depth images.
//!
//! PFM: `Pf`, width/height, scale `-1.0` (little-endian), then 32-bit
//! floats bottom row first. Invalid pixels are written as NaN; non-finite
//! values read back as invalid.
//!
//! PGM: binary `P5` with maxval 65535, big-endian samples. Metric images
//! are quantized to millimetres, normalized images to `v · 65535`. Invalid
//! pixels are written as 0 and a 0 sample reads back as invalid.

use crate::depth::DepthImage;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use thiserror::Error;

pub const MILLIMETRES_PER_METRE: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ImageIoError + '_ {
    move |source| ImageIoError::Io { path: path.display().to_string(), source }
}

fn format_err(path: &Path, message: impl Into<String>) -> ImageIoError {
    ImageIoError::Format { path: path.display().to_string(), message: message.into() }
}

pub fn encode_pfm(img: &DepthImage) -> Vec<u8> {
    let mut out = format!("Pf\n{} {}\n-1.0\n", img.width, img.height).into_bytes();
    out.reserve(img.len() * 4);
    for row in (0..img.height).rev() {
        for x in 0..img.width {
            let i = row * img.width + x;
            let v = if img.valid[i] { img.values[i] as f32 } else { f32::NAN };
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_pfm(path: &Path, img: &DepthImage) -> Result<(), ImageIoError> {
    fs::write(path, encode_pfm(img)).map_err(io_err(path))
}

/// Splits `count` whitespace-separated header tokens off the front of
/// `bytes`, consuming exactly one whitespace byte after the last one.
fn header_tokens(bytes: &[u8], count: usize) -> Option<(Vec<String>, &[u8])> {
    let mut tokens = Vec::with_capacity(count);
    let mut pos = 0;
    while tokens.len() < count {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if pos >= bytes.len() {
        return if tokens.len() == count { Some((tokens, &bytes[pos..])) } else { None };
    }
    Some((tokens, &bytes[pos + 1..]))
}

pub fn decode_pfm(bytes: &[u8], path: &Path) -> Result<DepthImage, ImageIoError> {
    let (tokens, data) = header_tokens(bytes, 4).ok_or_else(|| format_err(path, "truncated PFM header"))?;
    if tokens[0] != "Pf" {
        return Err(format_err(path, format!("expected single-channel PFM, found {:?}", tokens[0])));
    }
    let width: usize = tokens[1].parse().map_err(|_| format_err(path, "bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| format_err(path, "bad height"))?;
    let scale: f64 = tokens[3].parse().map_err(|_| format_err(path, "bad scale"))?;
    if data.len() != width * height * 4 {
        return Err(format_err(path, format!("expected {} data bytes, found {}", width * height * 4, data.len())));
    }
    let mut values = vec![0.0; width * height];
    for (k, chunk) in data.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        let (row, x) = (height - 1 - k / width, k % width);
        values[row * width + x] = f64::from(v);
    }
    DepthImage::new(width, height, values).map_err(|e| format_err(path, e.to_string()))
}

pub fn read_pfm(path: &Path) -> Result<DepthImage, ImageIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_pfm(&bytes, path)
}

fn pgm_scale(img: &DepthImage) -> f64 {
    if img.normalized {
        65535.0
    } else {
        MILLIMETRES_PER_METRE
    }
}

pub fn encode_pgm16(img: &DepthImage) -> Vec<u8> {
    let scale = pgm_scale(img);
    let mut out = format!("P5\n{} {}\n65535\n", img.width, img.height).into_bytes();
    out.reserve(img.len() * 2);
    for (v, ok) in img.values.iter().zip(&img.valid) {
        let q = if *ok { (v * scale).round().clamp(0.0, 65535.0) as u16 } else { 0 };
        out.extend_from_slice(&q.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: &Path, img: &DepthImage) -> Result<(), ImageIoError> {
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&encode_pgm16(img)).map_err(io_err(path))
}

/// Reads a 16-bit PGM as metric depth (millimetre samples).
pub fn read_pgm16(path: &Path) -> Result<DepthImage, ImageIoError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let (tokens, data) = header_tokens(&bytes, 4).ok_or_else(|| format_err(path, "truncated PGM header"))?;
    if tokens[0] != "P5" {
        return Err(format_err(path, format!("expected binary PGM, found {:?}", tokens[0])));
    }
    let width: usize = tokens[1].parse().map_err(|_| format_err(path, "bad width"))?;
    let height: usize = tokens[2].parse().map_err(|_| format_err(path, "bad height"))?;
    if tokens[3] != "65535" {
        return Err(format_err(path, "only 16-bit PGM (maxval 65535) is supported"));
    }
    if data.len() != width * height * 2 {
        return Err(format_err(path, format!("expected {} data bytes, found {}", width * height * 2, data.len())));
    }
    let samples: Vec<u16> = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    let values = samples.iter().map(|&s| f64::from(s) / MILLIMETRES_PER_METRE).collect();
    let mut img = DepthImage::new(width, height, values).map_err(|e| format_err(path, e.to_string()))?;
    img.valid = samples.iter().map(|&s| s != 0).collect();
    Ok(img)
}
