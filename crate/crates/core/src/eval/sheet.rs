//! PNG grids: one row per style, one column per class.

use std::path::Path;

use crate::data::png_io::{encode_gray, write_gray};
use crate::data::GlyphImage;
use crate::error::{Error, Result};

/// Ink-high glyph as dark-on-light 8-bit pixels.
pub fn glyph_pixels(img: &GlyphImage) -> Vec<u8> {
    img.to_ink_high().to_u8().into_iter().map(|v| 255 - v).collect()
}

/// Lays out `rows` with `gap` white pixels between cells. Returns `(width, height, pixels)`.
pub fn compose_grid(rows: &[Vec<GlyphImage>], gap: usize) -> Result<(usize, usize, Vec<u8>)> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.is_empty() || cols == 0 || rows.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidArgument("grid needs equal, non-empty rows".into()));
    }
    let s = rows[0][0].size();
    if rows.iter().flatten().any(|g| g.size() != s) {
        return Err(Error::InvalidArgument("grid cells must share one size".into()));
    }
    let w = cols * s + (cols + 1) * gap;
    let h = rows.len() * s + (rows.len() + 1) * gap;
    let mut px = vec![255u8; w * h];
    for (r, row) in rows.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            let (y0, x0) = (gap + r * (s + gap), gap + c * (s + gap));
            for (i, chunk) in glyph_pixels(img).chunks(s).enumerate() {
                let start = (y0 + i) * w + x0;
                px[start..start + s].copy_from_slice(chunk);
            }
        }
    }
    Ok((w, h, px))
}

pub fn grid_png(rows: &[Vec<GlyphImage>], gap: usize) -> Result<Vec<u8>> {
    let (w, h, px) = compose_grid(rows, gap)?;
    encode_gray(w, h, &px)
}

pub fn write_grid(path: &Path, rows: &[Vec<GlyphImage>], gap: usize) -> Result<()> {
    let (w, h, px) = compose_grid(rows, gap)?;
    write_gray(path, w, h, &px)
}

pub fn glyph_png(img: &GlyphImage) -> Result<Vec<u8>> {
    encode_gray(img.size(), img.size(), &glyph_pixels(img))
}
