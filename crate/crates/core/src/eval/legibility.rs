use rand::Rng;

use crate::data::GlyphImage;
use crate::error::{Error, Result};
use crate::eval::classifier::LegibilityClassifier;
use crate::model::{sample_style, Generator};
use crate::scalar::Scalar;

/// Anything that renders one glyph per class from a style vector.
pub trait GlyphSource {
    fn num_classes(&self) -> usize;
    fn render(&self, style: &[f32], classes: &[usize]) -> Result<Vec<GlyphImage>>;
}

impl<T: Scalar> GlyphSource for Generator<T> {
    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn render(&self, style: &[f32], classes: &[usize]) -> Result<Vec<GlyphImage>> {
        self.generate_classes(style, classes)
    }
}

/// Renders a full glyph set for each of `num_styles` random styles.
pub fn sample_glyph_sets<R: Rng + ?Sized>(
    source: &dyn GlyphSource,
    num_styles: usize,
    rng: &mut R,
) -> Result<(Vec<Vec<f32>>, Vec<Vec<GlyphImage>>)> {
    let classes: Vec<usize> = (0..source.num_classes()).collect();
    let styles: Vec<Vec<f32>> = (0..num_styles).map(|_| sample_style(rng)).collect();
    let sets = styles
        .iter()
        .map(|s| source.render(s, &classes))
        .collect::<Result<Vec<_>>>()?;
    Ok((styles, sets))
}

/// Fraction of generated glyphs the classifier assigns to their conditioning class.
pub fn legibility_score<T: Scalar, R: Rng + ?Sized>(
    source: &dyn GlyphSource,
    classifier: &LegibilityClassifier<T>,
    num_styles: usize,
    rng: &mut R,
) -> Result<f64> {
    let (_, sets) = sample_glyph_sets(source, num_styles, rng)?;
    legibility_of_sets(&sets, classifier)
}

/// Legibility of already rendered sets, `sets[style][class]`.
pub fn legibility_of_sets<T: Scalar>(sets: &[Vec<GlyphImage>], classifier: &LegibilityClassifier<T>) -> Result<f64> {
    let c = classifier.num_classes;
    if sets.iter().any(|s| s.len() != c) {
        return Err(Error::InvalidArgument(format!("every glyph set must hold {c} classes")));
    }
    let images: Vec<&GlyphImage> = sets.iter().flatten().collect();
    let labels: Vec<usize> = (0..images.len()).map(|i| i % c).collect();
    classifier.accuracy(&images, &labels)
}
