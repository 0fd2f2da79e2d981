use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::AdamConfig;
use crate::train::loss::LossMode;

/// Hyperparameters of an adversarial training run.
///
/// The run length is given either as `epochs` (one epoch = one turn per
/// class) or as `generator_iterations`, rounded up to whole epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub loss_mode: LossMode,
    /// Gradient-penalty coefficient.
    pub lambda: f64,
    /// Weight-clipping bound for wgan-clip.
    pub clip_c: f64,
    /// Critic updates per generator update.
    pub n_disc: usize,
    pub batch_size: usize,
    pub epochs: Option<usize>,
    pub generator_iterations: Option<usize>,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub image_size: usize,
    pub num_classes: usize,
    /// Channel width of the networks (64 gives the full-size stack).
    pub width: usize,
    pub seed: u64,
    /// Write a checkpoint every this many epochs (and always at the end).
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss_mode: LossMode::WganGp,
            lambda: 10.0,
            clip_c: 0.01,
            n_disc: 5,
            batch_size: 1024,
            epochs: None,
            generator_iterations: Some(2500),
            alpha: 0.0002,
            beta1: 0.5,
            beta2: 0.99,
            adam_eps: 1e-8,
            image_size: 64,
            num_classes: 26,
            width: 64,
            seed: 0,
            checkpoint_every: None,
        }
    }
}

impl TrainConfig {
    pub fn total_epochs(&self) -> usize {
        match (self.epochs, self.generator_iterations) {
            (Some(e), _) => e,
            (None, Some(iters)) => iters.div_ceil(self.num_classes.max(1)),
            (None, None) => 0,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.alpha,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn model(&self) -> ModelConfig {
        ModelConfig {
            image_size: self.image_size,
            num_classes: self.num_classes,
            width: self.width,
        }
    }

    /// Every violated constraint, for reporting all at once.
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if !(self.lambda >= 0.0) {
            p.push(format!("lambda must be >= 0 (got {})", self.lambda));
        }
        if !(self.clip_c > 0.0) {
            p.push(format!("clip_c must be > 0 (got {})", self.clip_c));
        }
        if self.n_disc == 0 {
            p.push("n_disc must be >= 1".into());
        }
        if self.batch_size == 0 {
            p.push("batch_size must be >= 1".into());
        }
        match (self.epochs, self.generator_iterations) {
            (Some(_), Some(_)) => p.push("give either epochs or generator_iterations, not both".into()),
            (None, None) => p.push("one of epochs or generator_iterations is required".into()),
            _ => {}
        }
        if !(self.alpha > 0.0) {
            p.push(format!("alpha must be > 0 (got {})", self.alpha));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                p.push(format!("{name} must be in [0, 1) (got {b})"));
            }
        }
        if !(self.adam_eps > 0.0) {
            p.push(format!("adam_eps must be > 0 (got {})", self.adam_eps));
        }
        if let Err(e) = self.model().validate() {
            p.push(e.to_string());
        }
        if self.checkpoint_every == Some(0) {
            p.push("checkpoint_every must be >= 1".into());
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(p.join("; ")))
        }
    }
}
