//! Generator and discriminator architectures plus latent-vector assembly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::image::GlyphImage;
use crate::error::{Error, Result};
use crate::nn::{ConvGeom, ForwardCtx, Graph, LayerSpec, Sequential, Tensor, Var};
use crate::scalar::Scalar;

/// Length of the style part of the latent vector.
pub const STYLE_DIM: usize = 100;

/// Image sizes the networks can be built for. 8 is only useful for tests;
/// datasets start at 16.
pub const MODEL_SIZES: [usize; 4] = [8, 16, 32, 64];

/// Leaky-ReLU slope used throughout the discriminator.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub num_classes: usize,
    /// Channels of the widest-resolution hidden layer; deeper layers double it.
    /// 64 reproduces the 512-256-128-64 stack at 64x64.
    pub width: usize,
}

impl ModelConfig {
    pub fn new(image_size: usize, num_classes: usize, width: usize) -> Result<Self> {
        let c = ModelConfig {
            image_size,
            num_classes,
            width,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !MODEL_SIZES.contains(&self.image_size) {
            return Err(Error::InvalidArgument(format!(
                "image size {} unsupported; expected one of {MODEL_SIZES:?}",
                self.image_size
            )));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument("model needs at least one class".into()));
        }
        if self.width == 0 {
            return Err(Error::InvalidArgument("channel width must be positive".into()));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        STYLE_DIM + self.num_classes
    }

    /// Number of stride-2 stages between 4x4 and the image size.
    pub fn stages(&self) -> usize {
        (self.image_size / 4).trailing_zeros() as usize
    }

    /// Channels of the 4x4 feature map.
    pub fn base_channels(&self) -> usize {
        self.width << (self.stages() - 1)
    }
}

/// Style vector followed by a one-hot class code.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    style: Vec<f32>,
    class: usize,
    num_classes: usize,
}

impl LatentVector {
    pub fn new(style: &[f32], class: usize, num_classes: usize) -> Result<Self> {
        if style.len() != STYLE_DIM {
            return Err(Error::InvalidArgument(format!(
                "style vector has {} entries, expected {STYLE_DIM}",
                style.len()
            )));
        }
        if let Some(bad) = style.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("style entry {bad} outside [-1, 1]")));
        }
        if class >= num_classes {
            return Err(Error::ClassOutOfRange { class, num_classes });
        }
        Ok(LatentVector {
            style: style.to_vec(),
            class,
            num_classes,
        })
    }

    pub fn style(&self) -> &[f32] {
        &self.style
    }

    pub fn class(&self) -> usize {
        self.class
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn class_onehot(&self) -> Vec<f32> {
        (0..self.num_classes).map(|c| if c == self.class { 1.0 } else { 0.0 }).collect()
    }

    /// `style ++ onehot(class)`.
    pub fn assembled(&self) -> Vec<f32> {
        let mut v = self.style.clone();
        v.extend(self.class_onehot());
        v
    }
}

pub fn assemble_latent(style: &[f32], class: usize, num_classes: usize) -> Result<LatentVector> {
    LatentVector::new(style, class, num_classes)
}

/// I.i.d. draws from `U(-1, 1)`, excluding both endpoints.
pub fn sample_style<R: Rng + ?Sized>(rng: &mut R) -> Vec<f32> {
    (0..STYLE_DIM)
        .map(|_| loop {
            let v: f32 = rng.gen_range(-1.0..1.0);
            if v > -1.0 {
                break v;
            }
        })
        .collect()
}

/// Row-major `[n, latent_dim]` batch.
pub fn latent_batch<T: Scalar>(latents: &[LatentVector]) -> Tensor<T> {
    let dim = latents.first().map_or(0, |l| STYLE_DIM + l.num_classes());
    let data = latents
        .iter()
        .flat_map(|l| l.assembled())
        .map(|v| T::from_f32(v).expect("f32 converts"))
        .collect();
    Tensor::from_vec(&[latents.len(), dim], data)
}

/// NHWC `[n, size, size, 1]` batch.
pub fn image_batch<T: Scalar>(images: &[&GlyphImage]) -> Tensor<T> {
    let size = images.first().map_or(0, |img| img.size());
    let data = images
        .iter()
        .flat_map(|img| img.pixels().iter())
        .map(|&v| T::from_f32(v).expect("f32 converts"))
        .collect();
    Tensor::from_vec(&[images.len(), size, size, 1], data)
}

/// Splits `[n, size, size, 1]` into images, clamping into `[0, 1]`.
pub fn tensor_to_images<T: Scalar>(t: &Tensor<T>) -> Result<Vec<GlyphImage>> {
    let size = t.shape()[1];
    t.data()
        .chunks(size * size)
        .map(|chunk| GlyphImage::from_clamped(size, chunk.iter().map(|v| v.to_f32().unwrap_or(f32::NAN))))
        .collect()
}

/// Project-and-reshape generator: FC to a 4x4 map, then stride-2 transposed
/// convolutions up to the image size. ReLU inside, Sigmoid on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<T> {
    pub config: ModelConfig,
    pub net: Sequential<T>,
}

pub fn generator_layers(config: &ModelConfig) -> Vec<LayerSpec> {
    let stages = config.stages();
    let c0 = config.base_channels();
    let mut layers = vec![
        LayerSpec::Linear {
            inputs: config.latent_dim(),
            outputs: 16 * c0,
        },
        LayerSpec::Relu,
        LayerSpec::Reshape { dims: vec![4, 4, c0] },
    ];
    for i in 0..stages {
        let size_in = 4 << i;
        let c_in = c0 >> i;
        let last = i + 1 == stages;
        let c_out = if last { 1 } else { c_in / 2 };
        layers.push(LayerSpec::ConvTranspose2d {
            geom: ConvGeom::halving(2 * size_in, c_out, c_in),
        });
        layers.push(if last { LayerSpec::Sigmoid } else { LayerSpec::Relu });
    }
    layers
}

impl<T: Scalar> Generator<T> {
    pub fn new(config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Generator {
            config,
            net: Sequential::new(generator_layers(&config), rng),
        })
    }

    /// `[n, latent_dim] -> [n, size, size, 1]` on the tape.
    pub fn forward(&self, g: &mut Graph<T>, bound: &[Var], latents: Var) -> Result<Var> {
        let shape = g.shape(latents);
        if shape.len() != 2 || shape[1] != self.config.latent_dim() {
            return Err(Error::shape(
                "generator input",
                format!("[batch, {}]", self.config.latent_dim()),
                shape,
            ));
        }
        self.net.forward(g, bound, latents, &mut ForwardCtx::eval())
    }

    pub fn generate(&self, latents: &[LatentVector]) -> Result<Vec<GlyphImage>> {
        if latents.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(l) = latents.iter().find(|l| l.num_classes() != self.config.num_classes) {
            return Err(Error::InvalidArgument(format!(
                "latent built for {} classes, generator has {}",
                l.num_classes(),
                self.config.num_classes
            )));
        }
        let mut g = Graph::new();
        let bound = self.net.params.bind(&mut g);
        let z = g.leaf(latent_batch(latents));
        let out = self.forward(&mut g, &bound, z)?;
        tensor_to_images(g.value(out))
    }

    /// One image per requested class from a single style vector.
    pub fn generate_classes(&self, style: &[f32], classes: &[usize]) -> Result<Vec<GlyphImage>> {
        let latents = classes
            .iter()
            .map(|&c| LatentVector::new(style, c, self.config.num_classes))
            .collect::<Result<Vec<_>>>()?;
        self.generate(&latents)
    }

    pub fn num_params(&self) -> usize {
        self.net.params.num_scalars()
    }
}

/// How the discriminator's final score is exposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscriminatorHead {
    /// Unbounded Wasserstein critic score.
    Critic,
    /// Terminal Sigmoid, for the original minimax objective.
    Probability,
}

/// Strided-convolution discriminator with Leaky-ReLU and no batch norm.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator<T> {
    pub config: ModelConfig,
    pub head: DiscriminatorHead,
    pub net: Sequential<T>,
}

pub fn discriminator_layers(config: &ModelConfig) -> Vec<LayerSpec> {
    let stages = config.stages();
    let mut layers = Vec::new();
    let mut c_in = 1;
    for i in 0..stages {
        let size_in = config.image_size >> i;
        let c_out = config.width << i;
        layers.push(LayerSpec::Conv2d {
            geom: ConvGeom::halving(size_in, c_in, c_out),
        });
        layers.push(LayerSpec::LeakyRelu { slope: LEAKY_SLOPE });
        c_in = c_out;
    }
    layers.push(LayerSpec::Reshape { dims: vec![16 * c_in] });
    layers.push(LayerSpec::Linear {
        inputs: 16 * c_in,
        outputs: 1,
    });
    layers
}

impl<T: Scalar> Discriminator<T> {
    pub fn new(config: ModelConfig, head: DiscriminatorHead, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        Ok(Discriminator {
            config,
            head,
            net: Sequential::new(discriminator_layers(&config), rng),
        })
    }

    /// Pre-activation scores `[n, 1]`.
    pub fn logits(&self, g: &mut Graph<T>, bound: &[Var], images: Var) -> Result<Var> {
        let s = self.config.image_size;
        let shape = g.shape(images);
        if shape.len() != 4 || shape[1..] != [s, s, 1] {
            return Err(Error::shape("discriminator input", format!("[batch, {s}, {s}, 1]"), shape));
        }
        self.net.forward(g, bound, images, &mut ForwardCtx::eval())
    }

    /// Scores `[n, 1]`: raw in critic mode, in `(0, 1)` in probability mode.
    pub fn forward(&self, g: &mut Graph<T>, bound: &[Var], images: Var) -> Result<Var> {
        let l = self.logits(g, bound, images)?;
        Ok(match self.head {
            DiscriminatorHead::Critic => l,
            DiscriminatorHead::Probability => g.sigmoid(l),
        })
    }

    pub fn score(&self, images: &[&GlyphImage]) -> Result<Vec<T>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        if let Some(img) = images.iter().find(|img| img.size() != self.config.image_size) {
            return Err(Error::shape(
                "discriminator input",
                format!("{0}x{0} image", self.config.image_size),
                &[img.size(), img.size()],
            ));
        }
        let mut g = Graph::new();
        let bound = self.net.params.bind(&mut g);
        let x = g.leaf(image_batch(images));
        let out = self.forward(&mut g, &bound, x)?;
        Ok(g.value(out).data().to_vec())
    }

    pub fn num_params(&self) -> usize {
        self.net.params.num_scalars()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn assemble_places_hot_coordinate() {
        let z = assemble_latent(&[0.0; STYLE_DIM], 0, 26).unwrap().assembled();
        assert_eq!(z.len(), 126);
        assert_eq!(z[100], 1.0);
        assert_eq!(z.iter().filter(|&&v| v != 0.0).count(), 1);
        let z = assemble_latent(&[0.0; STYLE_DIM], 25, 26).unwrap().assembled();
        assert_eq!(z[125], 1.0);
    }

    #[test]
    fn assemble_rejects_bad_inputs() {
        let mut style = vec![0.0; STYLE_DIM];
        style[3] = 1.5;
        assert!(assemble_latent(&style, 0, 26).is_err());
        assert!(assemble_latent(&[0.0; 99], 0, 26).is_err());
        assert!(matches!(
            assemble_latent(&[0.0; STYLE_DIM], 26, 26),
            Err(Error::ClassOutOfRange { .. })
        ));
    }

    #[test]
    fn style_sampling_is_seeded_and_open_interval() {
        let a = sample_style(&mut rng());
        let b = sample_style(&mut rng());
        assert_eq!(a, b);
        assert!(a.iter().all(|&v| v > -1.0 && v < 1.0));
    }

    #[test]
    fn style_sampling_mean_is_centered() {
        // std of one coordinate mean over 1e5 draws is 1/sqrt(3e5) ~ 0.0018.
        let mut r = rng();
        let mut sums = vec![0.0f64; STYLE_DIM];
        let n = 100_000;
        for _ in 0..n {
            for (s, v) in sums.iter_mut().zip(sample_style(&mut r)) {
                *s += v as f64;
            }
        }
        assert!(sums.iter().all(|s| (s / n as f64).abs() <= 0.02));
    }

    #[test]
    fn layer_stacks_follow_image_size() {
        let c = ModelConfig::new(64, 26, 64).unwrap();
        let channels: Vec<_> = generator_layers(&c)
            .iter()
            .filter_map(|l| match l {
                LayerSpec::ConvTranspose2d { geom } => Some((geom.out_c, geom.in_c, geom.in_h)),
                _ => None,
            })
            .collect();
        assert_eq!(channels, vec![(512, 256, 8), (256, 128, 16), (128, 64, 32), (64, 1, 64)]);
        let c = ModelConfig::new(32, 10, 64).unwrap();
        assert_eq!(c.base_channels(), 256);
        let c = ModelConfig::new(16, 10, 64).unwrap();
        assert_eq!(c.base_channels(), 128);
        let disc: Vec<_> = discriminator_layers(&ModelConfig::new(64, 26, 64).unwrap())
            .iter()
            .filter_map(|l| match l {
                LayerSpec::Conv2d { geom } => Some((geom.in_c, geom.out_c, geom.out_h)),
                _ => None,
            })
            .collect();
        assert_eq!(disc, vec![(1, 64, 32), (64, 128, 16), (128, 256, 8), (256, 512, 4)]);
    }

    #[test]
    fn generator_output_is_open_unit_interval_and_deterministic() {
        let c = ModelConfig::new(16, 4, 8).unwrap();
        let gen = Generator::<f32>::new(c, &mut rng()).unwrap();
        let z = vec![
            LatentVector::new(&sample_style(&mut rng()), 1, 4).unwrap(),
            LatentVector::new(&[0.0; STYLE_DIM], 3, 4).unwrap(),
        ];
        let a = gen.generate(&z).unwrap();
        let b = gen.generate(&z).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].size(), 16);
        assert!(a.iter().flat_map(|i| i.pixels()).all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn generator_rejects_wrong_latent_length() {
        let c = ModelConfig::new(16, 4, 8).unwrap();
        let gen = Generator::<f32>::new(c, &mut rng()).unwrap();
        let mut g = Graph::new();
        let bound = gen.net.params.bind(&mut g);
        let z = g.leaf(Tensor::zeros(&[1, 103]));
        assert!(gen.forward(&mut g, &bound, z).is_err());
        let wrong = LatentVector::new(&[0.0; STYLE_DIM], 0, 5).unwrap();
        assert!(gen.generate(&[wrong]).is_err());
    }

    #[test]
    fn discriminator_batches_match_single_calls() {
        let c = ModelConfig::new(16, 4, 8).unwrap();
        let d = Discriminator::<f64>::new(c, DiscriminatorHead::Critic, &mut rng()).unwrap();
        let zero = GlyphImage::blank(16).unwrap();
        let mut r = rng();
        let other = GlyphImage::from_clamped(16, (0..256).map(|_| r.gen::<f32>())).unwrap();
        let batch = d.score(&[&zero, &other]).unwrap();
        assert!(batch.iter().all(|v| v.is_finite()));
        assert_eq!(batch[0], d.score(&[&zero]).unwrap()[0]);
        assert_eq!(batch[1], d.score(&[&other]).unwrap()[0]);
    }

    #[test]
    fn probability_head_is_bounded() {
        let c = ModelConfig::new(16, 4, 8).unwrap();
        let mut d = Discriminator::<f64>::new(c, DiscriminatorHead::Probability, &mut rng()).unwrap();
        // Push the logit far from zero; the probability still stays in (0, 1).
        let last = d.net.params.tensors.len() - 1;
        d.net.params.tensors[last].value.data_mut()[0] = 20.0;
        let img = GlyphImage::blank(16).unwrap();
        let p = d.score(&[&img]).unwrap()[0];
        assert!(p > 0.0 && p < 1.0);
        d.head = DiscriminatorHead::Critic;
        assert!(d.score(&[&img]).unwrap()[0] > 1.0);
    }

    #[test]
    fn discriminator_has_no_batch_norm_and_rejects_wrong_size() {
        let c = ModelConfig::new(32, 4, 8).unwrap();
        let d = Discriminator::<f32>::new(c, DiscriminatorHead::Critic, &mut rng()).unwrap();
        assert!(!d.net.contains(|l| matches!(l, LayerSpec::BatchNorm { .. })));
        let small = GlyphImage::blank(16).unwrap();
        assert!(d.score(&[&small]).is_err());
    }

    #[test]
    fn parameter_counts_at_full_scale() {
        // Closed-form counts: weights k*k*cin*cout plus biases, FC (in+1)*out.
        let c = ModelConfig::new(64, 26, 64).unwrap();
        let fc_g = (100 + 26) * 4 * 4 * 512 + 4 * 4 * 512;
        let convt = |cin: usize, cout: usize| 25 * cin * cout + cout;
        let g_count = fc_g + convt(512, 256) + convt(256, 128) + convt(128, 64) + convt(64, 1);
        let d_count = convt(1, 64) + convt(64, 128) + convt(128, 256) + convt(256, 512) + 4 * 4 * 512 + 1;
        assert_eq!(g_count, 5_343_233);
        assert_eq!(d_count, 4_311_553);
        let gen = Generator::<f32>::new(c, &mut rng()).unwrap();
        let disc = Discriminator::<f32>::new(c, DiscriminatorHead::Critic, &mut rng()).unwrap();
        assert_eq!(gen.num_params(), g_count);
        assert_eq!(disc.num_params(), d_count);
    }
}
