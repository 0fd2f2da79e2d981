//! Legibility, diversity and style-consistency evaluation.

pub mod classifier;
pub mod distance;
pub mod interpolate;
pub mod legibility;
pub mod metrics;
pub mod report;
pub mod sheet;

pub use classifier::{ClassifierConfig, LegibilityClassifier, SplitAccuracy};
pub use distance::{nearest_training_distance, pseudo_hamming, DistanceMatrix, DistanceParams};
pub use interpolate::{interpolate_styles, interpolation_segments, Interpolation};
pub use legibility::{legibility_of_sets, legibility_score, sample_glyph_sets, GlyphSource};
pub use metrics::{diversity_metric, quartiles, style_consistency, StyleConsistency};
pub use report::{histogram, EvalReport, HistogramBin, ReportOptions};
