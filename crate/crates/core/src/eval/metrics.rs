//! Style consistency and diversity statistics over a [`DistanceMatrix`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::distance::DistanceMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleConsistency {
    /// Lower is more consistent.
    pub value: f64,
    pub included_rows: usize,
    /// Rows whose mean distance is zero, i.e. verbatim copies of training fonts.
    pub excluded_rows: usize,
}

/// `1/(N C) * sum_n (1 / dbar_n) * sum_c (d_nc - dbar_n)^2` over rows with a
/// positive mean; `N` counts only those rows.
///
/// This is variance over mean, not the coefficient of variation its usual
/// name suggests.
pub fn style_consistency(dm: &DistanceMatrix) -> Result<StyleConsistency> {
    let c = dm.num_classes as f64;
    let mut total = 0.0;
    let mut included = 0usize;
    for n in 0..dm.num_styles {
        let mean = dm.row_mean(n);
        if mean == 0.0 {
            continue;
        }
        let ss: f64 = dm.row(n).iter().map(|d| (d - mean) * (d - mean)).sum();
        total += ss / mean;
        included += 1;
    }
    if included == 0 {
        return Err(Error::DegenerateConsistency);
    }
    Ok(StyleConsistency {
        value: total / (included as f64 * c),
        included_rows: included,
        excluded_rows: dm.num_styles - included,
    })
}

/// Quantile of sorted data by linear interpolation at rank `p * (n - 1)`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
}

pub fn quartiles(values: &[f64]) -> Result<Quartiles> {
    if values.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "quartiles need at least 4 values, got {}",
            values.len()
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quartile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Quartiles {
        q1: quantile_sorted(&sorted, 0.25),
        q2: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
    })
}

/// Quartile coefficient of dispersion `(Q3 - Q1) / (2 Q2)` of the row means.
pub fn diversity_metric(row_means: &[f64]) -> Result<f64> {
    let q = quartiles(row_means)?;
    if q.q2 == 0.0 {
        return Err(Error::Degenerate("median distance is zero; diversity undefined".into()));
    }
    Ok((q.q3 - q.q1) / (2.0 * q.q2))
}
