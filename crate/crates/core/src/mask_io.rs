//! PNG mask loading and the run-length transport encoding.
//!
//! Runs are row-major and alternate background / foreground, starting with
//! background. A mask whose first pixel is foreground starts with a zero run;
//! no other run may be zero.

use std::path::Path;

use image::{DynamicImage, GrayImage, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::BinaryMask;

pub const DEFAULT_THRESHOLD: u8 = 128;

#[derive(Debug, Error)]
pub enum MaskIoError {
    #[error("cannot read mask {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot write mask {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("mask {path}: channels disagree at pixel ({x}, {y})")]
    MixedChannels { path: String, x: u32, y: u32 },
    #[error("mask {path}: unsupported pixel format {format}")]
    Unsupported { path: String, format: String },
    #[error("mask {0}: image has zero size")]
    ZeroSize(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RleError {
    #[error("runs sum to {actual}, expected {expected}")]
    RunSum { expected: u64, actual: u64 },
    #[error("zero-length run at position {0}")]
    ZeroRun(usize),
    #[error("empty run list")]
    Empty,
    #[error("invalid mask dimensions {0}x{1}")]
    Dimensions(u32, u32),
}

/// A mask as carried inside prediction files.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransportedMask {
    #[serde(rename = "token")]
    pub token_name: String,
    pub width: u32,
    pub height: u32,
    pub rle: Vec<u64>,
}

/// Loads an 8-bit PNG; pixels `>= threshold` are foreground.
///
/// Gray, gray+alpha, RGB and RGBA inputs are accepted; colour channels must
/// agree on every pixel and alpha is ignored.
pub fn load_mask(path: &Path, threshold: u8) -> Result<BinaryMask, MaskIoError> {
    let shown = || path.display().to_string();
    let img = image::open(path).map_err(|source| MaskIoError::Read {
        path: shown(),
        source,
    })?;
    let (w, h) = (img.width(), img.height());
    if w == 0 || h == 0 {
        return Err(MaskIoError::ZeroSize(shown()));
    }
    let gray: Vec<u8> = match &img {
        DynamicImage::ImageLuma8(g) => g.as_raw().clone(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0]).collect(),
        DynamicImage::ImageRgb8(rgb) => unanimous(rgb.pixels().map(|p| p.0), w, shown)?,
        DynamicImage::ImageRgba8(rgba) => {
            unanimous(rgba.pixels().map(|p| [p.0[0], p.0[1], p.0[2]]), w, shown)?
        }
        other => {
            return Err(MaskIoError::Unsupported {
                path: shown(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    let bits = gray.into_iter().map(|v| v >= threshold).collect();
    Ok(BinaryMask::new(w, h, bits).expect("dimensions come from the decoded image"))
}

fn unanimous(
    pixels: impl Iterator<Item = [u8; 3]>,
    width: u32,
    shown: impl Fn() -> String,
) -> Result<Vec<u8>, MaskIoError> {
    pixels
        .enumerate()
        .map(|(i, [r, g, b])| {
            if r == g && g == b {
                Ok(r)
            } else {
                Err(MaskIoError::MixedChannels {
                    path: shown(),
                    x: i as u32 % width,
                    y: i as u32 / width,
                })
            }
        })
        .collect()
}

/// Writes foreground as 255 and background as 0 into an 8-bit gray PNG.
pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<(), MaskIoError> {
    let img = GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        Luma([if mask.get(x, y) { 255 } else { 0 }])
    });
    img.save(path).map_err(|source| MaskIoError::Write {
        path: path.display().to_string(),
        source,
    })
}

/// Canonical run-length encoding of `mask`.
pub fn rle_encode(mask: &BinaryMask) -> Vec<u64> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u64;
    for &bit in mask.bits() {
        if bit == current {
            len += 1;
        } else {
            runs.push(len);
            current = bit;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn rle_decode(width: u32, height: u32, runs: &[u64]) -> Result<BinaryMask, RleError> {
    if width == 0 || height == 0 {
        return Err(RleError::Dimensions(width, height));
    }
    if runs.is_empty() {
        return Err(RleError::Empty);
    }
    let expected = width as u64 * height as u64;
    if let Some(pos) = runs.iter().skip(1).position(|&r| r == 0) {
        return Err(RleError::ZeroRun(pos + 1));
    }
    let actual = runs.iter().try_fold(0u64, |acc, &r| acc.checked_add(r));
    if actual != Some(expected) {
        return Err(RleError::RunSum {
            expected,
            actual: actual.unwrap_or(u64::MAX),
        });
    }
    let mut bits = Vec::with_capacity(expected as usize);
    for (i, &run) in runs.iter().enumerate() {
        bits.extend(std::iter::repeat(i % 2 == 1).take(run as usize));
    }
    Ok(BinaryMask::new(width, height, bits).expect("run sum checked"))
}

impl TransportedMask {
    pub fn encode(token_name: impl Into<String>, mask: &BinaryMask) -> Self {
        TransportedMask {
            token_name: token_name.into(),
            width: mask.width(),
            height: mask.height(),
            rle: rle_encode(mask),
        }
    }

    pub fn decode(&self) -> Result<BinaryMask, RleError> {
        rle_decode(self.width, self.height, &self.rle)
    }
}
