//! Glyph rasters, datasets and the procedural corpus.

pub mod dataset;
pub mod image;
pub mod png_io;
pub mod synthetic;

pub use dataset::GlyphDataset;
pub use image::{GlyphImage, InkPolarity};
pub use synthetic::{generate_synthetic_dataset, render_glyph, SyntheticStyleParams};
