//! Minimal 8-bit grayscale PNG reading and writing.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::{Error, Result};

fn png_err(path: &Path, message: impl ToString) -> Error {
    Error::Png {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Decodes a single-channel PNG into `(width, height, 8-bit pixels)`.
/// 16-bit and low bit-depth grayscale are normalized to 8 bits.
pub fn read_gray(path: &Path) -> Result<(usize, usize, Vec<u8>)> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| png_err(path, e))?;
    let (color, _) = reader.output_color_type();
    if color != png::ColorType::Grayscale {
        return Err(png_err(path, format!("expected single-channel grayscale, found {color:?}")));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| png_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| png_err(path, e))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let mut pixels = Vec::with_capacity(w * h);
    for row in buf[..info.buffer_size()].chunks(info.line_size) {
        pixels.extend_from_slice(&row[..w]);
    }
    Ok((w, h, pixels))
}

pub fn encode_gray(width: usize, height: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    assert_eq!(pixels.len(), width * height, "pixel buffer size");
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, width as u32, height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| png_err(Path::new("<memory>"), e))?;
        writer
            .write_image_data(pixels)
            .map_err(|e| png_err(Path::new("<memory>"), e))?;
    }
    Ok(out)
}

pub fn write_gray(path: &Path, width: usize, height: usize, pixels: &[u8]) -> Result<()> {
    let bytes = encode_gray(width, height, pixels)?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    std::io::Write::write_all(&mut w, &bytes).map_err(|e| Error::io(path, e))
}
