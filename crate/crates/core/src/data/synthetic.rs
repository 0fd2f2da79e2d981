//! Procedural glyph corpus with known styles.
//!
//! Every class is a fixed stroke skeleton; every style is one
//! [`SyntheticStyleParams`] applied to all classes, so glyphs of one style are
//! consistent by construction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::dataset::GlyphDataset;
use crate::data::image::{GlyphImage, InkPolarity, SUPPORTED_SIZES};
use crate::error::{Error, Result};

pub const MAX_SYNTHETIC_CLASSES: usize = 26;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStyleParams {
    /// Stroke width in pixels, >= 1.
    pub stroke_thickness: u32,
    /// Horizontal shear factor in `[-0.5, 0.5]`.
    pub slant: f64,
    /// Glyph scale about the image center, in `[0.5, 1.0]`.
    pub scale: f64,
    pub serif: bool,
}

impl SyntheticStyleParams {
    pub fn validate(&self) -> Result<()> {
        if self.stroke_thickness == 0 {
            return Err(Error::InvalidArgument("stroke thickness must be positive".into()));
        }
        if !(-0.5..=0.5).contains(&self.slant) {
            return Err(Error::InvalidArgument(format!("slant {} outside [-0.5, 0.5]", self.slant)));
        }
        if !(0.5..=1.0).contains(&self.scale) {
            return Err(Error::InvalidArgument(format!("scale {} outside [0.5, 1.0]", self.scale)));
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(image_size: usize, rng: &mut R) -> Self {
        // Narrower than the validated ranges so every glyph stays legible at 32 px.
        let min_thickness = (image_size / 16).max(1) as u32;
        let max_thickness = (image_size / 10).max(2) as u32;
        SyntheticStyleParams {
            stroke_thickness: rng.gen_range(min_thickness..=max_thickness),
            slant: rng.gen_range(-0.3..=0.3),
            scale: rng.gen_range(0.7..=1.0),
            serif: rng.gen_bool(0.5),
        }
    }
}

type Point = (f64, f64);

fn arc(cx: f64, cy: f64, rx: f64, ry: f64, from_deg: f64, to_deg: f64) -> Vec<Point> {
    let steps = 24;
    (0..=steps)
        .map(|i| {
            let a = (from_deg + (to_deg - from_deg) * i as f64 / steps as f64).to_radians();
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

/// Stroke skeleton of each class in unit coordinates (x right, y down),
/// kept inside `[0.2, 0.8]`.
fn skeleton(class: usize) -> Vec<Vec<Point>> {
    let (l, r, t, b, m) = (0.25, 0.75, 0.2, 0.8, 0.5);
    match class {
        0 => vec![vec![(m, t), (m, b)]],
        1 => vec![vec![(m, t), (m, b)], vec![(l, m), (r, m)]],
        2 => vec![arc(m, m, 0.25, 0.3, 0.0, 360.0)],
        3 => vec![vec![(l, t), (m, b), (r, t)]],
        4 => vec![vec![(l, t), (r, b)], vec![(r, t), (l, b)]],
        5 => vec![vec![(l, t), (l, b), (r, b)]],
        6 => vec![vec![(l, t), (r, t)], vec![(m, t), (m, b)]],
        7 => vec![vec![(l, t), (r, t), (r, b), (l, b), (l, t)]],
        8 => vec![vec![(m, t), (r, b), (l, b), (m, t)]],
        9 => vec![vec![(l, t), (l, b)], vec![(r, t), (r, b)], vec![(l, m), (r, m)]],
        10 => vec![vec![(l, t), (r, t), (l, b), (r, b)]],
        11 => vec![vec![(l, b), (l, t), (r, b), (r, t)]],
        12 => vec![vec![(r, t), (l, t), (l, b), (r, b)], vec![(l, m), (0.65, m)]],
        13 => vec![vec![(r, t), (l, t), (l, b)], vec![(l, m), (0.65, m)]],
        14 => vec![vec![(l, t), (l, 0.6)], arc(m, 0.6, 0.25, 0.2, 180.0, 0.0), vec![(r, 0.6), (r, t)]],
        15 => vec![vec![(l, b), (m, t), (r, b)]],
        16 => vec![vec![(0.2, t), (0.35, b), (m, 0.45), (0.65, b), (0.8, t)]],
        17 => vec![vec![(0.2, b), (0.2, t), (m, 0.6), (0.8, t), (0.8, b)]],
        18 => vec![vec![(l, t), (m, m), (r, t)], vec![(m, m), (m, b)]],
        19 => vec![vec![(l, t), (l, b)], vec![(r, t), (l, m), (r, b)]],
        20 => vec![arc(m, m, 0.25, 0.3, 45.0, 315.0)],
        21 => vec![vec![(l, t), (l, b)], arc(l, m, 0.45, 0.3, -90.0, 90.0)],
        22 => vec![vec![(l, b), (l, t)], arc(l, 0.35, 0.4, 0.15, -90.0, 90.0)],
        23 => vec![vec![(l, 0.38), (r, 0.38)], vec![(l, 0.62), (r, 0.62)]],
        24 => vec![arc(m, 0.35, 0.2, 0.15, 0.0, -270.0), arc(m, 0.65, 0.2, 0.15, -90.0, 180.0)],
        25 => vec![vec![(m, t), (r, m), (m, b), (l, m), (m, t)]],
        _ => unreachable!("class {class} beyond synthetic alphabet"),
    }
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

/// Renders one class in one style as an anti-aliased, 8-bit quantized image.
pub fn render_glyph(class: usize, style: &SyntheticStyleParams, image_size: usize) -> Result<GlyphImage> {
    if class >= MAX_SYNTHETIC_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "synthetic class {class} beyond {MAX_SYNTHETIC_CLASSES}"
        )));
    }
    if !SUPPORTED_SIZES.contains(&image_size) {
        return Err(Error::InvalidArgument(format!("image size {image_size} unsupported")));
    }
    style.validate()?;
    let size = image_size as f64;
    let to_px = |(x, y): Point| {
        let (sx, sy) = (0.5 + style.scale * (x - 0.5), 0.5 + style.scale * (y - 0.5));
        ((sx + style.slant * (0.5 - sy)) * size, sy * size)
    };
    let mut strokes: Vec<Vec<Point>> = skeleton(class)
        .into_iter()
        .map(|line| line.into_iter().map(to_px).collect())
        .collect();
    if style.serif {
        let half = 0.07 * style.scale * size;
        let mut serifs = Vec::new();
        for line in &strokes {
            let closed = line.first() == line.last();
            if line.len() < 2 || closed {
                continue;
            }
            for (end, prev) in [(line[0], line[1]), (line[line.len() - 1], line[line.len() - 2])] {
                let (dx, dy) = (end.0 - prev.0, end.1 - prev.1);
                let len = (dx * dx + dy * dy).sqrt().max(1e-9);
                let (nx, ny) = (-dy / len * half, dx / len * half);
                serifs.push(vec![(end.0 - nx, end.1 - ny), (end.0 + nx, end.1 + ny)]);
            }
        }
        strokes.extend(serifs);
    }
    let radius = style.stroke_thickness as f64 / 2.0;
    let mut bytes = Vec::with_capacity(image_size * image_size);
    for row in 0..image_size {
        for col in 0..image_size {
            let p = (col as f64 + 0.5, row as f64 + 0.5);
            let d = strokes
                .iter()
                .flat_map(|line| line.windows(2).map(move |w| dist_to_segment(p, w[0], w[1])))
                .fold(f64::INFINITY, f64::min);
            let coverage = (radius + 0.5 - d).clamp(0.0, 1.0);
            bytes.push((coverage * 255.0).round() as u8);
        }
    }
    GlyphImage::from_u8(image_size, &bytes, InkPolarity::InkHigh)
}

/// Style parameters drawn for each font of a synthetic corpus.
pub fn synthetic_styles(num_styles: usize, image_size: usize, seed: u64) -> Vec<SyntheticStyleParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_styles)
        .map(|_| SyntheticStyleParams::sample(image_size, &mut rng))
        .collect()
}

/// Deterministic corpus of `num_styles` fonts over the first `num_classes`
/// procedural classes.
pub fn generate_synthetic_dataset(num_styles: usize, num_classes: usize, image_size: usize, seed: u64) -> Result<GlyphDataset> {
    if num_classes > MAX_SYNTHETIC_CLASSES {
        return Err(Error::InvalidArgument(format!(
            "at most {MAX_SYNTHETIC_CLASSES} synthetic classes, requested {num_classes}"
        )));
    }
    if num_classes < 2 {
        return Err(Error::InvalidArgument("need at least 2 classes".into()));
    }
    if num_styles == 0 {
        return Err(Error::InvalidArgument("need at least 1 style".into()));
    }
    let mut images = Vec::with_capacity(num_styles * num_classes);
    for style in synthetic_styles(num_styles, image_size, seed) {
        for class in 0..num_classes {
            images.push(render_glyph(class, &style, image_size)?);
        }
    }
    GlyphDataset::new(num_styles, num_classes, images)
}
