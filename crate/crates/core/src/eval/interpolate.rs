use serde::{Deserialize, Serialize};

use crate::data::GlyphImage;
use crate::error::{Error, Result};
use crate::eval::legibility::GlyphSource;
use crate::model::STYLE_DIM;

/// `(1 - t) a + t b`, exact at both ends.
pub fn lerp(a: &[f32], b: &[f32], t: f64) -> Vec<f32> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| ((1.0 - t) * x as f64 + t * y as f64) as f32)
        .collect()
}

/// Style vectors along the piecewise-linear path through `anchors`, grouped by segment.
/// Each segment holds `steps + 1` vectors at `t = k / steps`.
pub fn interpolation_segments(anchors: &[Vec<f32>], steps: usize) -> Result<Vec<Vec<Vec<f32>>>> {
    if anchors.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "interpolation needs at least 2 anchors, got {}",
            anchors.len()
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps per segment must be at least 1".into()));
    }
    if let Some(a) = anchors.iter().find(|a| a.len() != STYLE_DIM) {
        return Err(Error::InvalidArgument(format!(
            "anchor has {} entries, expected {STYLE_DIM}",
            a.len()
        )));
    }
    Ok(anchors
        .windows(2)
        .map(|w| (0..=steps).map(|k| lerp(&w[0], &w[1], k as f64 / steps as f64)).collect())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interpolation {
    pub class: usize,
    pub steps: usize,
    /// Path styles with shared segment endpoints listed once.
    pub styles: Vec<Vec<f32>>,
    #[serde(skip)]
    pub frames: Vec<GlyphImage>,
}

impl Interpolation {
    pub fn num_segments(&self) -> usize {
        (self.styles.len() - 1) / self.steps
    }

    /// Frames of segment `i`, endpoints included.
    pub fn segment(&self, i: usize) -> &[GlyphImage] {
        &self.frames[i * self.steps..=(i + 1) * self.steps]
    }
}

/// Renders the path through `anchors` for a fixed `class`.
pub fn interpolate_styles(
    source: &dyn GlyphSource,
    anchors: &[Vec<f32>],
    steps: usize,
    class: usize,
) -> Result<Interpolation> {
    if class >= source.num_classes() {
        return Err(Error::ClassOutOfRange {
            class,
            num_classes: source.num_classes(),
        });
    }
    let segments = interpolation_segments(anchors, steps)?;
    let mut styles: Vec<Vec<f32>> = Vec::new();
    for (i, seg) in segments.into_iter().enumerate() {
        styles.extend(seg.into_iter().skip(usize::from(i > 0)));
    }
    let mut frames = Vec::with_capacity(styles.len());
    for s in &styles {
        frames.extend(source.render(s, &[class])?);
    }
    Ok(Interpolation {
        class,
        steps,
        styles,
        frames,
    })
}
