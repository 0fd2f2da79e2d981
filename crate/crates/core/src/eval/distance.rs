//! Tolerant mismatch counts between binarized glyphs and nearest-pattern search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GlyphDataset, GlyphImage};
use crate::error::{Error, Result};

/// Binarization threshold and match radius for [`pseudo_hamming`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceParams {
    /// Chebyshev radius within which an ink pixel counts as matched.
    pub radius: usize,
    /// Pixels at or above this value are ink.
    pub threshold: f32,
}

impl Default for DistanceParams {
    fn default() -> Self {
        DistanceParams {
            radius: 1,
            threshold: 0.5,
        }
    }
}

impl DistanceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "binarization threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Bit-packed ink set together with its square dilation.
#[derive(Debug, Clone)]
pub struct InkMask {
    size: usize,
    ink: Vec<u64>,
    dilated: Vec<u64>,
}

fn pack(bits: &[bool]) -> Vec<u64> {
    let mut words = vec![0u64; bits.len().div_ceil(64)];
    for (i, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
        words[i / 64] |= 1 << (i % 64);
    }
    words
}

impl InkMask {
    pub fn new(image: &GlyphImage, params: DistanceParams) -> Self {
        let size = image.size();
        let ink = image.binarize(params.threshold);
        let r = params.radius as isize;
        let n = size as isize;
        // Separable max filter: rows, then columns.
        let mut horiz = vec![false; ink.len()];
        for y in 0..n {
            for x in 0..n {
                let lo = (x - r).max(0);
                let hi = (x + r).min(n - 1);
                horiz[(y * n + x) as usize] = (lo..=hi).any(|xx| ink[(y * n + xx) as usize]);
            }
        }
        let mut dil = vec![false; ink.len()];
        for y in 0..n {
            for x in 0..n {
                let lo = (y - r).max(0);
                let hi = (y + r).min(n - 1);
                dil[(y * n + x) as usize] = (lo..=hi).any(|yy| horiz[(yy * n + x) as usize]);
            }
        }
        InkMask {
            size,
            ink: pack(&ink),
            dilated: pack(&dil),
        }
    }

    pub fn ink_pixels(&self) -> u32 {
        self.ink.iter().map(|w| w.count_ones()).sum()
    }

    /// Ink pixels of `self` with no ink of `other` within the radius.
    fn unmatched_in(&self, other: &InkMask) -> u32 {
        self.ink.iter().zip(&other.dilated).map(|(a, d)| (a & !d).count_ones()).sum()
    }

    pub fn distance(&self, other: &InkMask) -> Result<f64> {
        if self.size != other.size {
            return Err(Error::InvalidArgument(format!(
                "cannot compare {}px and {}px glyphs",
                self.size, other.size
            )));
        }
        Ok((self.unmatched_in(other) + other.unmatched_in(self)) as f64)
    }
}

/// Symmetric mismatch count: ink pixels of either image that have no ink
/// pixel of the other within Chebyshev distance `radius`.
pub fn pseudo_hamming(a: &GlyphImage, b: &GlyphImage, params: DistanceParams) -> Result<f64> {
    params.validate()?;
    if a.size() != b.size() {
        return Err(Error::InvalidArgument(format!(
            "cannot compare {}px and {}px glyphs",
            a.size(),
            b.size()
        )));
    }
    InkMask::new(a, params).distance(&InkMask::new(b, params))
}

/// Distances from every generated glyph to its closest training glyph of the
/// same class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub num_styles: usize,
    pub num_classes: usize,
    /// Row-major `[style][class]`.
    pub d: Vec<f64>,
    /// Training font attaining each minimum (lowest id on ties).
    pub argmin: Vec<usize>,
}

impl DistanceMatrix {
    pub fn new(num_styles: usize, num_classes: usize, d: Vec<f64>, argmin: Vec<usize>) -> Result<Self> {
        if d.len() != num_styles * num_classes || argmin.len() != d.len() {
            return Err(Error::InvalidArgument(format!(
                "{} distances for a {num_styles}x{num_classes} matrix",
                d.len()
            )));
        }
        if let Some(bad) = d.iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("distance {bad} is negative or NaN")));
        }
        Ok(DistanceMatrix {
            num_styles,
            num_classes,
            d,
            argmin,
        })
    }

    pub fn get(&self, style: usize, class: usize) -> f64 {
        self.d[style * self.num_classes + class]
    }

    pub fn row(&self, style: usize) -> &[f64] {
        &self.d[style * self.num_classes..(style + 1) * self.num_classes]
    }

    pub fn row_mean(&self, style: usize) -> f64 {
        self.row(style).iter().sum::<f64>() / self.num_classes as f64
    }

    pub fn row_means(&self) -> Vec<f64> {
        (0..self.num_styles).map(|n| self.row_mean(n)).collect()
    }

    /// Most frequent argmin font of a row, lowest id on ties.
    pub fn most_similar_font(&self, style: usize) -> usize {
        let ids = &self.argmin[style * self.num_classes..(style + 1) * self.num_classes];
        let mut counts = std::collections::BTreeMap::new();
        for &f in ids {
            *counts.entry(f).or_insert(0usize) += 1;
        }
        let best = counts.values().copied().max().unwrap_or(0);
        counts.into_iter().find(|(_, c)| *c == best).map(|(f, _)| f).unwrap_or(0)
    }

    pub fn min(&self) -> f64 {
        self.d.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Worker count for parallel metrics: `GLYPHFORGE_THREADS` if set, otherwise
/// every available core.
pub fn worker_threads() -> usize {
    std::env::var("GLYPHFORGE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Builds the distance matrix for `generated[style][class]`.
pub fn nearest_training_distance(
    generated: &[Vec<GlyphImage>],
    training: &GlyphDataset,
    params: DistanceParams,
) -> Result<DistanceMatrix> {
    params.validate()?;
    let n = generated.len();
    if n == 0 {
        return Err(Error::InvalidArgument("no generated glyphs to compare".into()));
    }
    let c = generated[0].len();
    if c == 0 || generated.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidArgument("generated rows must all hold the same non-zero number of classes".into()));
    }
    if c > training.num_classes() {
        return Err(Error::InvalidArgument(format!(
            "generated set has {c} classes, training data only {}",
            training.num_classes()
        )));
    }
    let size = training.image_size();
    if let Some(img) = generated.iter().flatten().find(|g| g.size() != size) {
        return Err(Error::InvalidArgument(format!(
            "generated glyph is {}px, training glyphs are {size}px",
            img.size()
        )));
    }

    let run = || {
        let train_masks: Vec<InkMask> = training.images().par_iter().map(|img| InkMask::new(img, params)).collect();
        (0..n * c)
            .into_par_iter()
            .map(|cell| {
                let (style, class) = (cell / c, cell % c);
                let gen = InkMask::new(&generated[style][class], params);
                let mut best = (f64::INFINITY, 0usize);
                for font in 0..training.num_fonts() {
                    let t = &train_masks[font * training.num_classes() + class];
                    let d = (gen.unmatched_in(t) + t.unmatched_in(&gen)) as f64;
                    if d < best.0 {
                        best = (d, font);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    };
    let cells = match rayon::ThreadPoolBuilder::new().num_threads(worker_threads()).build() {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    };
    let (d, argmin) = cells.into_iter().unzip();
    DistanceMatrix::new(n, c, d, argmin)
}
