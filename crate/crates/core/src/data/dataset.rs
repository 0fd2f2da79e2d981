use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;

use crate::data::image::{GlyphImage, InkPolarity, SUPPORTED_SIZES};
use crate::data::png_io;
use crate::error::{Error, Result};

/// Magic bytes of the packed `.glyphds` cache.
pub const CACHE_MAGIC: [u8; 4] = *b"GLDS";
pub const CACHE_VERSION: u32 = 1;

/// Complete `(font, class)` grid of equally sized glyph images.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphDataset {
    num_fonts: usize,
    num_classes: usize,
    image_size: usize,
    /// Font-major: index `font * num_classes + class`.
    images: Vec<GlyphImage>,
}

impl GlyphDataset {
    /// Builds a dataset from font-major images, validating completeness,
    /// uniform size and ink polarity.
    pub fn new(num_fonts: usize, num_classes: usize, images: Vec<GlyphImage>) -> Result<Self> {
        if num_fonts == 0 {
            return Err(Error::Dataset("dataset needs at least one font".into()));
        }
        if num_classes == 0 {
            return Err(Error::Dataset("dataset needs at least one class".into()));
        }
        if images.len() != num_fonts * num_classes {
            return Err(Error::Dataset(format!(
                "expected {} images for {num_fonts} fonts x {num_classes} classes, got {}",
                num_fonts * num_classes,
                images.len()
            )));
        }
        let image_size = images[0].size();
        let offenders: Vec<String> = images
            .iter()
            .enumerate()
            .filter(|(_, img)| img.size() != image_size)
            .map(|(i, img)| format!("font {} class {} is {}px", i / num_classes, i % num_classes, img.size()))
            .collect();
        if !offenders.is_empty() {
            return Err(Error::MixedSizes { offenders });
        }
        let images = images.into_iter().map(|img| img.to_ink_high()).collect();
        Ok(GlyphDataset {
            num_fonts,
            num_classes,
            image_size,
            images,
        })
    }

    pub fn num_fonts(&self) -> usize {
        self.num_fonts
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn get(&self, font: usize, class: usize) -> &GlyphImage {
        assert!(font < self.num_fonts && class < self.num_classes, "({font}, {class}) out of range");
        &self.images[font * self.num_classes + class]
    }

    pub fn images(&self) -> &[GlyphImage] {
        &self.images
    }

    /// Images of one font, in class order.
    pub fn font(&self, font: usize) -> &[GlyphImage] {
        &self.images[font * self.num_classes..(font + 1) * self.num_classes]
    }

    /// Subset containing the given fonts, renumbered in the given order.
    pub fn select_fonts(&self, fonts: &[usize]) -> Result<GlyphDataset> {
        let images = fonts.iter().flat_map(|&f| self.font(f).iter().cloned()).collect();
        GlyphDataset::new(fonts.len(), self.num_classes, images)
    }

    /// `batch_size` images of class `class`, drawn uniformly with replacement
    /// across fonts.
    pub fn sample_batch<R: Rng + ?Sized>(&self, class: usize, batch_size: usize, rng: &mut R) -> Result<Vec<&GlyphImage>> {
        if class >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                class,
                num_classes: self.num_classes,
            });
        }
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok((0..batch_size)
            .map(|_| self.get(rng.gen_range(0..self.num_fonts), class))
            .collect())
    }

    /// Reads `root/<font_id>/<class_id>.png`.
    ///
    /// Font ids must be `0..N` and every font must provide classes `0..C`,
    /// where `C` is one past the largest class id seen. Dark-on-light sources
    /// are inverted so ink is stored high.
    pub fn import_dir(root: &Path) -> Result<GlyphDataset> {
        let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
        let mut fonts: BTreeMap<usize, BTreeMap<usize, std::path::PathBuf>> = BTreeMap::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(root, e))?;
            let path = entry.path();
            if !path.is_dir() {
                continue;
            }
            let Some(font) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.parse::<usize>().ok()) else {
                continue;
            };
            let mut classes = BTreeMap::new();
            for f in fs::read_dir(&path).map_err(|e| Error::io(&path, e))? {
                let f = f.map_err(|e| Error::io(&path, e))?.path();
                if f.extension().and_then(|e| e.to_str()) != Some("png") {
                    continue;
                }
                if let Some(class) = f.file_stem().and_then(|n| n.to_str()).and_then(|n| n.parse::<usize>().ok()) {
                    classes.insert(class, f);
                }
            }
            fonts.insert(font, classes);
        }
        if fonts.is_empty() {
            return Err(Error::NoFonts(root.to_path_buf()));
        }
        let num_fonts = fonts.len();
        if let Some((pos, (&id, _))) = fonts.iter().enumerate().find(|(i, (id, _))| *i != **id) {
            return Err(Error::Dataset(format!(
                "font directories must be numbered 0..{num_fonts}; found {id} at position {pos}"
            )));
        }
        let all_classes: BTreeSet<usize> = fonts.values().flat_map(|c| c.keys().copied()).collect();
        let num_classes = all_classes.iter().next_back().map_or(0, |c| c + 1);
        if num_classes == 0 {
            return Err(Error::Dataset(format!("no class images under {}", root.display())));
        }
        for (&font, classes) in &fonts {
            if let Some(class) = (0..num_classes).find(|c| !classes.contains_key(c)) {
                return Err(Error::MissingClass { font, class });
            }
        }

        let mut images = Vec::with_capacity(num_fonts * num_classes);
        let mut offenders = Vec::new();
        let mut expected_size = None;
        for classes in fonts.values() {
            for class in 0..num_classes {
                let path = &classes[&class];
                let (w, h, pixels) = png_io::read_gray(path)?;
                let size = *expected_size.get_or_insert(w);
                if w != h || w != size || !SUPPORTED_SIZES.contains(&w) {
                    offenders.push(format!("{} ({}x{})", path.display(), w, h));
                    continue;
                }
                let polarity = detect_polarity(size, &pixels);
                images.push(GlyphImage::from_u8(size, &pixels, polarity)?);
            }
        }
        if !offenders.is_empty() {
            return Err(Error::MixedSizes { offenders });
        }
        GlyphDataset::new(num_fonts, num_classes, images)
    }

    /// Writes `root/<font_id>/<class_id>.png` with ink stored bright.
    pub fn export_dir(&self, root: &Path) -> Result<()> {
        for font in 0..self.num_fonts {
            let dir = root.join(font.to_string());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for class in 0..self.num_classes {
                let img = self.get(font, class);
                png_io::write_gray(&dir.join(format!("{class}.png")), self.image_size, self.image_size, &img.to_u8())?;
            }
        }
        Ok(())
    }

    /// Packed cache: magic, version, fonts, classes, size (u32 LE), then
    /// 8-bit intensities font-major, class, row, column.
    pub fn to_cache_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.images.len() * self.image_size * self.image_size);
        out.extend_from_slice(&CACHE_MAGIC);
        for v in [CACHE_VERSION, self.num_fonts as u32, self.num_classes as u32, self.image_size as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for img in &self.images {
            out.extend(img.to_u8());
        }
        out
    }

    pub fn from_cache_bytes(bytes: &[u8]) -> Result<GlyphDataset> {
        if bytes.len() < 20 || bytes[..4] != CACHE_MAGIC {
            return Err(Error::Dataset("not a glyph dataset cache (bad magic)".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
        let version = word(0) as u32;
        if version != CACHE_VERSION {
            return Err(Error::Dataset(format!(
                "cache version {version} unsupported (expected {CACHE_VERSION})"
            )));
        }
        let (num_fonts, num_classes, size) = (word(1), word(2), word(3));
        let per_image = size * size;
        let body = &bytes[20..];
        if body.len() != num_fonts * num_classes * per_image {
            return Err(Error::Dataset(format!(
                "cache body has {} bytes, header promises {}",
                body.len(),
                num_fonts * num_classes * per_image
            )));
        }
        let images = body
            .chunks(per_image.max(1))
            .map(|chunk| GlyphImage::from_u8(size, chunk, InkPolarity::InkHigh))
            .collect::<Result<Vec<_>>>()?;
        GlyphDataset::new(num_fonts, num_classes, images)
    }

    pub fn save_cache(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("glyphds.tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&self.to_cache_bytes()).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load_cache(path: &Path) -> Result<GlyphDataset> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_cache_bytes(&bytes)
    }
}

/// Majority vote of the four corner pixels: bright corners mean the glyph is
/// drawn dark on a light background.
fn detect_polarity(size: usize, pixels: &[u8]) -> InkPolarity {
    let corners = [0, size - 1, size * (size - 1), size * size - 1];
    let bright = corners.iter().filter(|&&i| pixels[i] >= 128).count();
    if bright > 2 {
        InkPolarity::InkLow
    } else {
        InkPolarity::InkHigh
    }
}
