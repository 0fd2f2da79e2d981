use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{image_batch, latent_batch, Discriminator, Generator, LatentVector};
use crate::nn::{gradient_penalty, Graph, Var};
use crate::data::GlyphImage;
use crate::scalar::Scalar;

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LossMode {
    /// Wasserstein critic with gradient penalty.
    #[serde(rename = "wgan-gp")]
    WganGp,
    /// Wasserstein critic with weights clamped after every critic step.
    #[serde(rename = "wgan-clip")]
    WganClip,
    /// Original minimax objective with a sigmoid discriminator.
    #[serde(rename = "dcgan")]
    Dcgan,
}

impl LossMode {
    pub const ALL: [LossMode; 3] = [LossMode::WganGp, LossMode::WganClip, LossMode::Dcgan];

    pub fn as_str(self) -> &'static str {
        match self {
            LossMode::WganGp => "wgan-gp",
            LossMode::WganClip => "wgan-clip",
            LossMode::Dcgan => "dcgan",
        }
    }
}

impl fmt::Display for LossMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::UnknownLossMode(s.to_string()))
    }
}

/// Critic objective on the tape plus its scalar components.
#[derive(Debug, Clone, Copy)]
pub struct CriticObjective {
    /// Quantity the critic minimizes.
    pub loss: Var,
    /// `E[D(x)]` (probabilities in dcgan mode).
    pub real_mean: f64,
    /// `E[D(G(z))]` (probabilities in dcgan mode).
    pub fake_mean: f64,
    /// Penalty value; zero outside wgan-gp.
    pub penalty: f64,
}

impl CriticObjective {
    /// `E[D(x)] - E[D(G(z))]`.
    pub fn wasserstein_estimate(&self) -> f64 {
        self.real_mean - self.fake_mean
    }
}

fn mean_of<T: Scalar>(g: &Graph<T>, v: Var) -> f64 {
    let t = g.value(v);
    t.data().iter().map(|x| x.to_f64_lossy()).sum::<f64>() / t.numel() as f64
}

/// Builds the critic loss for one batch.
///
/// * wgan-gp: `mean D(fake) - mean D(real) + lambda * mean (||grad D(x_hat)|| - 1)^2`
///   with `x_hat_i = eps_i * real_i + (1 - eps_i) * fake_i`.
/// * wgan-clip: the same without the penalty.
/// * dcgan: `-(mean log D(real) + mean log(1 - D(fake)))`, computed from logits.
#[allow(clippy::too_many_arguments)]
pub fn critic_objective<T: Scalar>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    disc_bound: &[Var],
    real: Var,
    fake: Var,
    eps: &[T],
    mode: LossMode,
    lambda: f64,
) -> Result<CriticObjective> {
    let (rs, fs) = (g.shape(real).to_vec(), g.shape(fake).to_vec());
    if rs != fs {
        return Err(Error::InvalidArgument(format!(
            "real batch {rs:?} and fake batch {fs:?} differ"
        )));
    }
    match mode {
        LossMode::WganGp | LossMode::WganClip => {
            let d_real = disc.logits(g, disc_bound, real)?;
            let d_fake = disc.logits(g, disc_bound, fake)?;
            let real_mean = g.mean_all(d_real);
            let fake_mean = g.mean_all(d_fake);
            let mut loss = g.sub(fake_mean, real_mean);
            let mut penalty = 0.0;
            if mode == LossMode::WganGp {
                if eps.len() != rs[0] {
                    return Err(Error::InvalidArgument(format!(
                        "{} interpolation weights for a batch of {}",
                        eps.len(),
                        rs[0]
                    )));
                }
                let keep: Vec<T> = eps.iter().map(|&e| T::one() - e).collect();
                let from_real = g.scale_rows(real, Rc::new(eps.to_vec()));
                let from_fake = g.scale_rows(fake, Rc::new(keep));
                let x_hat = g.add(from_real, from_fake);
                let p = gradient_penalty(g, x_hat, lambda, |g, x| disc.logits(g, disc_bound, x))?;
                penalty = g.value(p.value).item().to_f64_lossy();
                loss = g.add(loss, p.value);
            }
            Ok(CriticObjective {
                loss,
                real_mean: g.value(real_mean).item().to_f64_lossy(),
                fake_mean: g.value(fake_mean).item().to_f64_lossy(),
                penalty,
            })
        }
        LossMode::Dcgan => {
            let l_real = disc.logits(g, disc_bound, real)?;
            let l_fake = disc.logits(g, disc_bound, fake)?;
            // -log sigmoid(l) = softplus(-l); -log(1 - sigmoid(l)) = softplus(l)
            let neg_real = g.scale(l_real, -T::one());
            let a = g.softplus(neg_real);
            let b = g.softplus(l_fake);
            let a_mean = g.mean_all(a);
            let b_mean = g.mean_all(b);
            let loss = g.add(a_mean, b_mean);
            let p_real = g.sigmoid(l_real);
            let p_fake = g.sigmoid(l_fake);
            Ok(CriticObjective {
                loss,
                real_mean: mean_of(g, p_real),
                fake_mean: mean_of(g, p_fake),
                penalty: 0.0,
            })
        }
    }
}

/// Generator loss: `-mean D(fake)` for the Wasserstein modes and
/// `mean log(1 - D(fake))` for dcgan.
pub fn generator_objective<T: Scalar>(
    g: &mut Graph<T>,
    disc: &Discriminator<T>,
    disc_bound: &[Var],
    fake: Var,
    mode: LossMode,
) -> Result<Var> {
    let logits = disc.logits(g, disc_bound, fake)?;
    Ok(match mode {
        LossMode::WganGp | LossMode::WganClip => {
            let m = g.mean_all(logits);
            g.scale(m, -T::one())
        }
        LossMode::Dcgan => {
            let sp = g.softplus(logits);
            let m = g.mean_all(sp);
            g.scale(m, -T::one())
        }
    })
}

/// Dcgan value `mean log D(x) + mean log(1 - D(G(z)))` from probabilities.
pub fn minimax_value(real_probs: &[f64], fake_probs: &[f64]) -> f64 {
    let mean = |v: &[f64], f: &dyn Fn(f64) -> f64| v.iter().map(|&p| f(p)).sum::<f64>() / v.len() as f64;
    mean(real_probs, &|p| p.ln()) + mean(fake_probs, &|p| (1.0 - p).ln())
}

/// Evaluates the critic loss for concrete batches with the generator held fixed.
#[allow(clippy::too_many_arguments)]
pub fn critic_loss<T: Scalar>(
    disc: &Discriminator<T>,
    gen: &Generator<T>,
    real: &[&GlyphImage],
    styles: &[Vec<f32>],
    class: usize,
    eps: &[T],
    mode: LossMode,
    lambda: f64,
) -> Result<f64> {
    if real.len() != styles.len() {
        return Err(Error::InvalidArgument(format!(
            "{} real images but {} style vectors",
            real.len(),
            styles.len()
        )));
    }
    let latents = styles
        .iter()
        .map(|s| LatentVector::new(s, class, gen.config.num_classes))
        .collect::<Result<Vec<_>>>()?;
    let mut g = Graph::new();
    let gb = gen.net.params.bind(&mut g);
    let db = disc.net.params.bind(&mut g);
    let z = g.leaf(latent_batch(&latents));
    let fake = gen.forward(&mut g, &gb, z)?;
    let x = g.leaf(image_batch(real));
    let obj = critic_objective(&mut g, disc, &db, x, fake, eps, mode, lambda)?;
    Ok(g.value(obj.loss).item().to_f64_lossy())
}

pub fn generator_loss<T: Scalar>(
    disc: &Discriminator<T>,
    gen: &Generator<T>,
    styles: &[Vec<f32>],
    class: usize,
    mode: LossMode,
) -> Result<f64> {
    let latents = styles
        .iter()
        .map(|s| LatentVector::new(s, class, gen.config.num_classes))
        .collect::<Result<Vec<_>>>()?;
    let mut g = Graph::new();
    let gb = gen.net.params.bind(&mut g);
    let db = disc.net.params.bind(&mut g);
    let z = g.leaf(latent_batch(&latents));
    let fake = gen.forward(&mut g, &gb, z)?;
    let loss = generator_objective(&mut g, disc, &db, fake, mode)?;
    Ok(g.value(loss).item().to_f64_lossy())
}
