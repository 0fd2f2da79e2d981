//! Multi-font character recognizer used to score legibility.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::rc::Rc;

use crate::data::{GlyphDataset, GlyphImage};
use crate::error::{Error, Result};
use crate::model::image_batch;
use crate::nn::{AdamConfig, AdamState, ConvGeom, ForwardCtx, Graph, LayerSpec, Sequential, Tensor};
use crate::scalar::Scalar;
use crate::train::checkpoint::{read_params_into, write_atomic, write_params, ByteReader, ByteWriter};

pub const CONV_CHANNELS: [usize; 4] = [32, 64, 128, 256];
const CLASSIFIER_MAGIC: [u8; 4] = *b"GCLS";
const CLASSIFIER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub hidden: usize,
    pub dropout: f64,
    /// Training images are translated by up to this many pixels per axis.
    pub max_shift: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 15,
            batch_size: 32,
            alpha: 1e-3,
            hidden: 128,
            dropout: 0.5,
            max_shift: 2,
            seed: 0,
        }
    }
}

/// Four 3x3 convolutions with ReLU (stride 1, then 2), then a fully connected layer
/// followed by batch norm and dropout, then the class scores.
pub fn classifier_layers(image_size: usize, num_classes: usize, hidden: usize, dropout: f64) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    let (mut size, mut c_in) = (image_size, 1);
    for (i, &c_out) in CONV_CHANNELS.iter().enumerate() {
        // The first layer keeps full resolution so one-pixel strokes survive.
        let stride = if i == 0 { 1 } else { 2 };
        let geom = ConvGeom::new(size, size, c_in, c_out, 3, stride, 1);
        layers.push(LayerSpec::Conv2d { geom });
        layers.push(LayerSpec::Relu);
        size = geom.out_h;
        c_in = c_out;
    }
    let flat = size * size * c_in;
    layers.push(LayerSpec::Reshape { dims: vec![flat] });
    layers.push(LayerSpec::Linear { inputs: flat, outputs: hidden });
    layers.push(LayerSpec::BatchNorm {
        features: hidden,
        momentum: 0.1,
        eps: 1e-5,
    });
    layers.push(LayerSpec::Relu);
    layers.push(LayerSpec::Dropout { rate: dropout });
    layers.push(LayerSpec::Linear {
        inputs: hidden,
        outputs: num_classes,
    });
    layers
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitAccuracy {
    pub train: f64,
    pub test: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassifierHeader {
    image_size: usize,
    num_classes: usize,
    config: ClassifierConfig,
}

#[derive(Debug, Clone)]
pub struct LegibilityClassifier<T> {
    pub image_size: usize,
    pub num_classes: usize,
    pub config: ClassifierConfig,
    pub net: Sequential<T>,
}

/// Font ids for the 9:1 split, shuffled by `seed`.
pub fn split_fonts(num_fonts: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if num_fonts < 10 {
        return Err(Error::Dataset(format!(
            "a 9:1 font split needs at least 10 fonts, got {num_fonts}"
        )));
    }
    let mut ids: Vec<usize> = (0..num_fonts).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = (num_fonts as f64 / 10.0).round() as usize;
    let mut test_ids = ids[..test].to_vec();
    let mut train_ids = ids[test..].to_vec();
    test_ids.sort_unstable();
    train_ids.sort_unstable();
    Ok((train_ids, test_ids))
}

impl<T: Scalar> LegibilityClassifier<T> {
    pub fn new(image_size: usize, num_classes: usize, config: ClassifierConfig) -> Result<Self> {
        if image_size < 16 || !image_size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("unsupported classifier image size {image_size}")));
        }
        if num_classes < 2 {
            return Err(Error::InvalidArgument("classifier needs at least 2 classes".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) || config.batch_size < 2 || config.hidden == 0 {
            return Err(Error::InvalidArgument(
                "classifier needs dropout in [0, 1), batch size >= 2 and a hidden layer".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let net = Sequential::new(
            classifier_layers(image_size, num_classes, config.hidden, config.dropout),
            &mut rng,
        );
        Ok(LegibilityClassifier {
            image_size,
            num_classes,
            config,
            net,
        })
    }

    fn check_images(&self, images: &[&GlyphImage]) -> Result<()> {
        if let Some(img) = images.iter().find(|i| i.size() != self.image_size) {
            return Err(Error::InvalidArgument(format!(
                "classifier expects {}px glyphs, got {}px",
                self.image_size,
                img.size()
            )));
        }
        Ok(())
    }

    /// Class scores `[n, C]` in inference mode.
    pub fn scores(&self, images: &[&GlyphImage]) -> Result<Tensor<T>> {
        self.check_images(images)?;
        if images.is_empty() {
            return Ok(Tensor::zeros(&[0, self.num_classes]));
        }
        let mut g = Graph::new();
        let bound = self.net.params.bind(&mut g);
        let x = g.leaf(image_batch(images));
        let out = self.net.forward(&mut g, &bound, x, &mut ForwardCtx::eval())?;
        Ok(g.value(out).clone())
    }

    /// Softmax of [`Self::scores`], in f64.
    pub fn probabilities(&self, images: &[&GlyphImage]) -> Result<Vec<Vec<f64>>> {
        let s = self.scores(images)?;
        Ok(s.data()
            .chunks(self.num_classes)
            .map(|row| {
                let row: Vec<f64> = row.iter().map(|v| v.to_f64_lossy()).collect();
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                let z: f64 = e.iter().sum();
                e.into_iter().map(|v| v / z).collect()
            })
            .collect())
    }

    pub fn predict(&self, images: &[&GlyphImage]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(256) {
            let s = self.scores(chunk)?;
            out.extend(s.data().chunks(self.num_classes).map(|row| {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            }));
        }
        Ok(out)
    }

    /// Fraction of `images` predicted as their label.
    pub fn accuracy(&self, images: &[&GlyphImage], labels: &[usize]) -> Result<f64> {
        if images.len() != labels.len() || images.is_empty() {
            return Err(Error::InvalidArgument("accuracy needs one label per image and at least one image".into()));
        }
        let pred = self.predict(images)?;
        Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64)
    }

    pub fn dataset_accuracy(&self, ds: &GlyphDataset) -> Result<f64> {
        let (images, labels) = labelled(ds);
        self.accuracy(&images, &labels)
    }

    /// One pass of minibatch Adam over `images`, reshuffled by `rng`.
    fn train_epoch(
        &mut self,
        images: &[&GlyphImage],
        labels: &[usize],
        opt: &mut AdamState<T>,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64> {
        let mut order: Vec<usize> = (0..images.len()).collect();
        order.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for idx in order.chunks(self.config.batch_size) {
            if idx.len() < 2 {
                continue;
            }
            let shifted: Vec<GlyphImage> = idx
                .iter()
                .map(|&i| {
                    let m = self.config.max_shift as isize;
                    let (dy, dx) = (rng.gen_range(-m..=m), rng.gen_range(-m..=m));
                    translate(images[i], dy, dx)
                })
                .collect();
            let batch: Vec<&GlyphImage> = shifted.iter().collect();
            let mut onehot = vec![T::zero(); idx.len() * self.num_classes];
            for (row, &i) in idx.iter().enumerate() {
                onehot[row * self.num_classes + labels[i]] = T::one();
            }
            let mut g = Graph::new();
            let bound = self.net.params.bind(&mut g);
            let x = g.leaf(image_batch(&batch));
            let mut ctx = ForwardCtx::train(rng);
            let logits = self.net.forward(&mut g, &bound, x, &mut ctx)?;
            let stats = std::mem::take(&mut ctx.bn_batch_stats);
            drop(ctx);
            let logp = g.log_softmax(logits);
            let picked = g.mask_mul(logp, Rc::new(onehot));
            let sum = g.sum_all(picked);
            let loss = g.scale(sum, T::from_f64_lossy(-1.0 / idx.len() as f64));
            let grads = g.grad(loss, &bound)?;
            self.net.params.store_grads(&g, &grads);
            opt.step(&mut self.net.params)?;
            self.net.apply_bn_stats(&stats);
            total += g.value(loss).item().to_f64_lossy();
            batches += 1;
        }
        Ok(total / batches.max(1) as f64)
    }

    /// Trains on `images` for `config.epochs` epochs.
    pub fn fit(&mut self, images: &[&GlyphImage], labels: &[usize]) -> Result<()> {
        self.check_images(images)?;
        if images.len() != labels.len() || images.len() < 2 {
            return Err(Error::InvalidArgument("training needs at least two labelled images".into()));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= self.num_classes) {
            return Err(Error::ClassOutOfRange {
                class: *l,
                num_classes: self.num_classes,
            });
        }
        let adam = AdamConfig {
            alpha: self.config.alpha,
            ..AdamConfig::default()
        };
        let mut opt = AdamState::new(adam, &self.net.params);
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed);
        for epoch in 0..self.config.epochs {
            // Cosine decay settles the weights and batch-norm statistics together.
            let progress = epoch as f64 / self.config.epochs as f64;
            opt.config.alpha = self.config.alpha * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos());
            self.train_epoch(images, labels, &mut opt, &mut rng)?;
        }
        Ok(())
    }

    /// Trains on 9/10 of the fonts and reports accuracy on both parts.
    pub fn train_split(ds: &GlyphDataset, config: ClassifierConfig) -> Result<(Self, SplitAccuracy)> {
        let (train_ids, test_ids) = split_fonts(ds.num_fonts(), config.seed)?;
        let train = ds.select_fonts(&train_ids)?;
        let test = ds.select_fonts(&test_ids)?;
        let mut clf = Self::new(ds.image_size(), ds.num_classes(), config)?;
        let (images, labels) = labelled(&train);
        clf.fit(&images, &labels)?;
        let acc = SplitAccuracy {
            train: clf.dataset_accuracy(&train)?,
            test: clf.dataset_accuracy(&test)?,
        };
        Ok((clf, acc))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.buf.extend_from_slice(&CLASSIFIER_MAGIC);
        w.u32(CLASSIFIER_VERSION);
        w.buf.push(T::TAG);
        let header = ClassifierHeader {
            image_size: self.image_size,
            num_classes: self.num_classes,
            config: self.config.clone(),
        };
        w.bytes(&serde_json::to_vec(&header).expect("header serializes"));
        write_params(&mut w, &self.net.params);
        for stats in self.net.running.iter().flatten() {
            for v in stats.mean.iter().chain(&stats.var) {
                v.write_le(&mut w.buf);
            }
        }
        w.u64(self.net.bn_updates);
        w.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4).ok() != Some(&CLASSIFIER_MAGIC[..]) {
            return Err(Error::Checkpoint("not a classifier file".into()));
        }
        let version = r.u32()?;
        if version != CLASSIFIER_VERSION {
            return Err(Error::CheckpointVersion {
                found: version,
                expected: CLASSIFIER_VERSION,
            });
        }
        if r.u8()? != T::TAG {
            return Err(Error::Checkpoint("classifier stored with a different scalar width".into()));
        }
        let header: ClassifierHeader = serde_json::from_slice(r.bytes()?)?;
        let mut clf = Self::new(header.image_size, header.num_classes, header.config)?;
        read_params_into(&mut r, &mut clf.net.params, "classifier")?;
        for stats in clf.net.running.iter_mut().flatten() {
            for v in stats.mean.iter_mut().chain(stats.var.iter_mut()) {
                *v = T::read_le(r.take(T::BYTES)?);
            }
        }
        clf.net.bn_updates = r.u64()?;
        r.finish()?;
        Ok(clf)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Shifts ink by `(dy, dx)`, filling uncovered pixels with background.
pub fn translate(img: &GlyphImage, dy: isize, dx: isize) -> GlyphImage {
    let src = img.to_ink_high();
    let n = src.size() as isize;
    let px = (0..n * n).map(|i| {
        let (y, x) = (i / n - dy, i % n - dx);
        if (0..n).contains(&y) && (0..n).contains(&x) {
            src.pixels()[(y * n + x) as usize]
        } else {
            0.0
        }
    });
    GlyphImage::from_clamped(src.size(), px).expect("same size")
}

/// Every image of `ds` paired with its class.
pub fn labelled(ds: &GlyphDataset) -> (Vec<&GlyphImage>, Vec<usize>) {
    let c = ds.num_classes();
    let images: Vec<&GlyphImage> = ds.images().iter().collect();
    let labels = (0..images.len()).map(|i| i % c).collect();
    (images, labels)
}
