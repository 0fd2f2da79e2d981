use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::GlyphDataset;
use crate::error::{Error, Result};
use crate::model::{image_batch, latent_batch, sample_style, Discriminator, DiscriminatorHead, Generator, LatentVector};
use crate::nn::{AdamState, Graph};
use crate::scalar::Scalar;
use crate::train::config::TrainConfig;
use crate::train::loss::{critic_objective, generator_objective, LossMode};
use crate::train::telemetry::TelemetryRecord;

/// Which network an update touched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Critic,
    Generator,
}

/// Hooks invoked around every parameter update and at epoch boundaries.
pub trait TrainObserver<T> {
    fn before_update(&mut self, _kind: UpdateKind, _class: usize, _trainer: &Trainer<T>) {}
    fn after_update(&mut self, _kind: UpdateKind, _class: usize, _trainer: &Trainer<T>) {}
    fn on_record(&mut self, _record: &TelemetryRecord) -> Result<()> {
        Ok(())
    }
    fn on_epoch_end(&mut self, _trainer: &Trainer<T>) -> Result<()> {
        Ok(())
    }
}

impl<T> TrainObserver<T> for () {}

/// Collects telemetry records in memory.
#[derive(Debug, Default)]
pub struct Recorder {
    pub records: Vec<TelemetryRecord>,
}

impl<T> TrainObserver<T> for Recorder {
    fn on_record(&mut self, record: &TelemetryRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Statistics of one critic update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriticStep {
    pub loss: f64,
    pub penalty: f64,
    pub wasserstein: f64,
}

/// Mutable state of a training run: both networks, their optimizers and the RNG.
pub struct Trainer<T> {
    pub config: TrainConfig,
    pub generator: Generator<T>,
    pub discriminator: Discriminator<T>,
    pub gen_opt: AdamState<T>,
    pub disc_opt: AdamState<T>,
    pub rng: ChaCha8Rng,
    /// Completed epochs.
    pub epoch: usize,
    pub generator_updates: u64,
    pub critic_updates: u64,
    started: Option<Instant>,
}

pub fn head_for(mode: LossMode) -> DiscriminatorHead {
    match mode {
        LossMode::Dcgan => DiscriminatorHead::Probability,
        LossMode::WganGp | LossMode::WganClip => DiscriminatorHead::Critic,
    }
}

impl<T: Scalar> Trainer<T> {
    /// Fresh networks initialized from `config.seed`.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = config.model();
        let generator = Generator::new(model, &mut rng)?;
        let discriminator = Discriminator::new(model, head_for(config.loss_mode), &mut rng)?;
        let gen_opt = AdamState::new(config.adam(), &generator.net.params);
        let disc_opt = AdamState::new(config.adam(), &discriminator.net.params);
        Ok(Trainer {
            config,
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            rng,
            epoch: 0,
            generator_updates: 0,
            critic_updates: 0,
            started: None,
        })
    }

    /// Reassembles a trainer from saved parts.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        config: TrainConfig,
        generator: Generator<T>,
        discriminator: Discriminator<T>,
        gen_opt: AdamState<T>,
        disc_opt: AdamState<T>,
        rng: ChaCha8Rng,
        epoch: usize,
        generator_updates: u64,
        critic_updates: u64,
    ) -> Self {
        Trainer {
            config,
            generator,
            discriminator,
            gen_opt,
            disc_opt,
            rng,
            epoch,
            generator_updates,
            critic_updates,
            started: None,
        }
    }

    pub fn check_dataset(&self, ds: &GlyphDataset) -> Result<()> {
        if ds.num_classes() != self.config.num_classes {
            return Err(Error::InvalidArgument(format!(
                "dataset has {} classes, config expects {}",
                ds.num_classes(),
                self.config.num_classes
            )));
        }
        if ds.image_size() != self.config.image_size {
            return Err(Error::InvalidArgument(format!(
                "dataset images are {}px, config expects {}px",
                ds.image_size(),
                self.config.image_size
            )));
        }
        Ok(())
    }

    fn sample_latents(&mut self, class: usize) -> Result<Vec<LatentVector>> {
        let n = self.config.batch_size;
        (0..n)
            .map(|_| LatentVector::new(&sample_style(&mut self.rng), class, self.config.num_classes))
            .collect()
    }

    /// One critic update on a fresh class-`class` batch; the generator only
    /// produces samples and receives no gradient.
    pub fn critic_update(&mut self, ds: &GlyphDataset, class: usize) -> Result<CriticStep> {
        let m = self.config.batch_size;
        let real_images = ds.sample_batch(class, m, &mut self.rng)?;
        let latents = self.sample_latents(class)?;
        let eps: Vec<T> = (0..m).map(|_| T::from_f64_lossy(self.rng.gen::<f64>())).collect();

        let mut g = Graph::new();
        let gen_bound = self.generator.net.params.bind(&mut g);
        let disc_bound = self.discriminator.net.params.bind(&mut g);
        let z = g.leaf(latent_batch(&latents));
        let fake = self.generator.forward(&mut g, &gen_bound, z)?;
        let real = g.leaf(image_batch(&real_images));
        let obj = critic_objective(
            &mut g,
            &self.discriminator,
            &disc_bound,
            real,
            fake,
            &eps,
            self.config.loss_mode,
            self.config.lambda,
        )?;
        let grads = g.grad(obj.loss, &disc_bound)?;
        self.generator.net.params.zero_grads();
        self.discriminator.net.params.store_grads(&g, &grads);
        self.disc_opt.step(&mut self.discriminator.net.params)?;
        if self.config.loss_mode == LossMode::WganClip {
            let c = T::from_f64_lossy(self.config.clip_c);
            self.discriminator.net.params.clamp(c);
        }
        self.critic_updates += 1;
        Ok(CriticStep {
            loss: g.value(obj.loss).item().to_f64_lossy(),
            penalty: obj.penalty,
            wasserstein: obj.wasserstein_estimate(),
        })
    }

    /// One generator update against the current (frozen) discriminator.
    pub fn generator_update(&mut self, class: usize) -> Result<f64> {
        let latents = self.sample_latents(class)?;
        let mut g = Graph::new();
        let gen_bound = self.generator.net.params.bind(&mut g);
        let disc_bound = self.discriminator.net.params.bind(&mut g);
        let z = g.leaf(latent_batch(&latents));
        let fake = self.generator.forward(&mut g, &gen_bound, z)?;
        let loss = generator_objective(&mut g, &self.discriminator, &disc_bound, fake, self.config.loss_mode)?;
        let grads = g.grad(loss, &gen_bound)?;
        self.discriminator.net.params.zero_grads();
        self.generator.net.params.store_grads(&g, &grads);
        self.gen_opt.step(&mut self.generator.net.params)?;
        self.generator_updates += 1;
        Ok(g.value(loss).item().to_f64_lossy())
    }

    /// `n_disc` critic updates followed by one generator update, all for `class`.
    pub fn class_turn(
        &mut self,
        ds: &GlyphDataset,
        class: usize,
        observer: &mut dyn TrainObserver<T>,
    ) -> Result<TelemetryRecord> {
        let started = *self.started.get_or_insert_with(Instant::now);
        let n_disc = self.config.n_disc;
        let (mut loss, mut penalty, mut w) = (0.0, 0.0, 0.0);
        for _ in 0..n_disc {
            observer.before_update(UpdateKind::Critic, class, self);
            let step = self.critic_update(ds, class)?;
            observer.after_update(UpdateKind::Critic, class, self);
            loss += step.loss;
            penalty += step.penalty;
            w += step.wasserstein;
        }
        observer.before_update(UpdateKind::Generator, class, self);
        let gen_loss = self.generator_update(class)?;
        observer.after_update(UpdateKind::Generator, class, self);
        let k = n_disc as f64;
        Ok(TelemetryRecord {
            step: self.generator_updates,
            epoch: self.epoch + 1,
            class,
            critic_loss: loss / k,
            generator_loss: gen_loss,
            gradient_penalty: penalty / k,
            wasserstein_estimate: w / k,
            wall_clock_ms: started.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// One pass over all classes in ascending order.
    pub fn run_epoch(&mut self, ds: &GlyphDataset, observer: &mut dyn TrainObserver<T>) -> Result<()> {
        self.check_dataset(ds)?;
        for class in 0..self.config.num_classes {
            let record = self.class_turn(ds, class, observer)?;
            observer.on_record(&record)?;
        }
        self.epoch += 1;
        observer.on_epoch_end(self)
    }

    /// Runs epochs until `config.total_epochs()` have completed.
    pub fn fit(&mut self, ds: &GlyphDataset, observer: &mut dyn TrainObserver<T>) -> Result<()> {
        self.check_dataset(ds)?;
        while self.epoch < self.config.total_epochs() {
            self.run_epoch(ds, observer)?;
        }
        Ok(())
    }
}

/// Trains from scratch and returns the final state with its telemetry.
pub fn train<T: Scalar>(config: TrainConfig, ds: &GlyphDataset) -> Result<(Trainer<T>, Vec<TelemetryRecord>)> {
    let mut trainer = Trainer::new(config)?;
    trainer.check_dataset(ds)?;
    let mut rec = Recorder::default();
    trainer.fit(ds, &mut rec)?;
    Ok((trainer, rec.records))
}
