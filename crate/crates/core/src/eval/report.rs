use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::distance::{DistanceMatrix, DistanceParams};
use crate::eval::metrics::{diversity_metric, style_consistency};
use crate::train::checkpoint::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Fixed-width histogram whose first bin starts at `floor(min / width) * width`.
pub fn histogram(values: &[f64], bin_width: f64) -> Result<Vec<HistogramBin>> {
    if !(bin_width > 0.0 && bin_width.is_finite()) {
        return Err(Error::InvalidArgument(format!("bin width must be positive, got {bin_width}")));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("histogram input".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let start = (lo / bin_width).floor() * bin_width;
    let bins = (((hi - start) / bin_width).floor() as usize) + 1;
    let mut counts = vec![0usize; bins];
    for v in values {
        let i = (((v - start) / bin_width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            bin_lo: start + i as f64 * bin_width,
            bin_hi: start + (i + 1) as f64 * bin_width,
            count,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_styles: usize,
    pub num_classes: usize,
    pub distance: DistanceParams,
    /// Fraction of generated glyphs recognized as their class.
    pub legibility: Option<f64>,
    pub classifier_train_accuracy: Option<f64>,
    pub classifier_test_accuracy: Option<f64>,
    /// `None` when every style reproduces a training font exactly.
    pub style_consistency: Option<f64>,
    pub consistency_excluded_rows: usize,
    pub diversity: Option<f64>,
    pub min_distance: f64,
    pub max_distance: f64,
    pub bin_width: f64,
    pub histogram: Vec<HistogramBin>,
    pub below_threshold: f64,
    /// Fraction of row means strictly below `below_threshold`.
    pub fraction_below: f64,
    pub most_similar_fonts: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportOptions {
    pub bin_width: f64,
    pub below_threshold: f64,
}

impl EvalReport {
    /// Distance-based parts of the report; legibility is filled in separately.
    pub fn from_distances(dm: &DistanceMatrix, params: DistanceParams, opts: ReportOptions) -> Result<Self> {
        let means = dm.row_means();
        let (consistency, excluded) = match style_consistency(dm) {
            Ok(cs) => (Some(cs.value), cs.excluded_rows),
            Err(Error::DegenerateConsistency) => (None, dm.num_styles),
            Err(e) => return Err(e),
        };
        let diversity = if means.len() >= 4 { diversity_metric(&means).ok() } else { None };
        Ok(EvalReport {
            num_styles: dm.num_styles,
            num_classes: dm.num_classes,
            distance: params,
            legibility: None,
            classifier_train_accuracy: None,
            classifier_test_accuracy: None,
            style_consistency: consistency,
            consistency_excluded_rows: excluded,
            diversity,
            min_distance: dm.min(),
            max_distance: dm.max(),
            bin_width: opts.bin_width,
            histogram: histogram(&means, opts.bin_width)?,
            below_threshold: opts.below_threshold,
            fraction_below: means.iter().filter(|&&m| m < opts.below_threshold).count() as f64 / means.len() as f64,
            most_similar_fonts: (0..dm.num_styles).map(|n| dm.most_similar_font(n)).collect(),
        })
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec_pretty(self)?)
    }

    pub fn histogram_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "bin_lo,bin_hi,count").expect("vec write");
        for b in &self.histogram {
            writeln!(out, "{},{},{}", b.bin_lo, b.bin_hi, b.count).expect("vec write");
        }
        String::from_utf8(out).expect("ascii")
    }
}
