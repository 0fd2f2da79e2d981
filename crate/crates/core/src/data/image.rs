use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported square raster sizes.
pub const SUPPORTED_SIZES: [usize; 3] = [16, 32, 64];

/// How pixel intensities relate to ink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InkPolarity {
    /// Ink is bright (1.0) on a dark (0.0) background.
    InkHigh,
    /// Ink is dark (0.0) on a bright (1.0) background, as in most scans.
    InkLow,
}

/// Single-channel square glyph raster with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    size: usize,
    polarity: InkPolarity,
    pixels: Vec<f32>,
}

impl GlyphImage {
    pub fn new(size: usize, pixels: Vec<f32>, polarity: InkPolarity) -> Result<Self> {
        if !SUPPORTED_SIZES.contains(&size) {
            return Err(Error::InvalidArgument(format!(
                "image size {size} unsupported; expected one of {SUPPORTED_SIZES:?}"
            )));
        }
        if pixels.len() != size * size {
            return Err(Error::InvalidArgument(format!(
                "{size}x{size} image needs {} pixels, got {}",
                size * size,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("intensity {bad} outside [0, 1]")));
        }
        Ok(GlyphImage {
            size,
            polarity,
            pixels,
        })
    }

    /// Ink-high image; out-of-range or non-finite values are clamped.
    pub fn from_clamped(size: usize, pixels: impl IntoIterator<Item = f32>) -> Result<Self> {
        let pixels = pixels
            .into_iter()
            .map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) })
            .collect();
        Self::new(size, pixels, InkPolarity::InkHigh)
    }

    pub fn blank(size: usize) -> Result<Self> {
        Self::new(size, vec![0.0; size * size], InkPolarity::InkHigh)
    }

    pub fn from_u8(size: usize, bytes: &[u8], polarity: InkPolarity) -> Result<Self> {
        Self::new(size, bytes.iter().map(|&b| b as f32 / 255.0).collect(), polarity)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn width(&self) -> usize {
        self.size
    }

    pub fn height(&self) -> usize {
        self.size
    }

    pub fn polarity(&self) -> InkPolarity {
        self.polarity
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.size + col]
    }

    /// Same image with ink stored as high intensity.
    pub fn to_ink_high(&self) -> GlyphImage {
        match self.polarity {
            InkPolarity::InkHigh => self.clone(),
            InkPolarity::InkLow => GlyphImage {
                size: self.size,
                polarity: InkPolarity::InkHigh,
                pixels: self.pixels.iter().map(|v| 1.0 - v).collect(),
            },
        }
    }

    /// Quantizes to 8 bits (`round(v * 255)`).
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|v| (v * 255.0).round() as u8).collect()
    }

    /// Pixels at or above `threshold` count as ink.
    pub fn binarize(&self, threshold: f32) -> Vec<bool> {
        let ink = self.to_ink_high();
        ink.pixels.iter().map(|&v| v >= threshold).collect()
    }

    pub fn ink_count(&self, threshold: f32) -> usize {
        self.binarize(threshold).iter().filter(|b| **b).count()
    }

    pub fn mean_abs_diff(&self, other: &GlyphImage) -> f64 {
        let n = self.pixels.len().max(1) as f64;
        self.pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum::<f64>()
            / n
    }
}
