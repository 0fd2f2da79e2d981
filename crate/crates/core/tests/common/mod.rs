//! Checks shared by the integration tests and the acceptance report.
//! Every oracle here is written independently of the library code it checks.

#![allow(dead_code)]

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use glyphforge_core::data::{GlyphDataset, GlyphImage};
use glyphforge_core::eval::{diversity_metric, nearest_training_distance, pseudo_hamming, style_consistency, DistanceMatrix, DistanceParams};
use glyphforge_core::model::{Discriminator, DiscriminatorHead, Generator, ModelConfig, STYLE_DIM};
use glyphforge_core::nn::{gradient_penalty, Graph, ParamSet, Tensor};
use glyphforge_core::train::{critic_objective, generator_objective, LossMode, TrainObserver, Trainer, UpdateKind};

// ---------------------------------------------------------------- gradients

pub struct GradientReport {
    pub coordinates: usize,
    pub within_tolerance: usize,
    pub parameters: usize,
    pub elapsed: Duration,
}

impl GradientReport {
    pub fn fraction(&self) -> f64 {
        self.within_tolerance as f64 / self.coordinates as f64
    }
}

pub const FD_STEP: f64 = 1e-3;
pub const FD_TOLERANCE: f64 = 1e-3;

fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn scale_params(p: &mut ParamSet<f64>, rng: &mut ChaCha8Rng) {
    // Wider than the training init so every layer contributes curvature.
    let n = Normal::new(0.0, 0.3).unwrap();
    for t in &mut p.tensors {
        t.value.data_mut().iter_mut().for_each(|v| *v = n.sample(rng));
    }
}

struct Tiny {
    gen: Generator<f64>,
    disc: Discriminator<f64>,
    real: Tensor<f64>,
    z: Tensor<f64>,
    eps: Vec<f64>,
}

impl Tiny {
    fn new(head: DiscriminatorHead, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig::new(8, 3, 4).unwrap();
        let mut gen = Generator::new(cfg, &mut rng).unwrap();
        let mut disc = Discriminator::new(cfg, head, &mut rng).unwrap();
        scale_params(&mut gen.net.params, &mut rng);
        scale_params(&mut disc.net.params, &mut rng);
        let m = 4;
        let real = Tensor::from_vec(&[m, 8, 8, 1], (0..m * 64).map(|_| rng.gen::<f64>()).collect());
        let mut z = Vec::new();
        for i in 0..m {
            z.extend((0..STYLE_DIM).map(|_| rng.gen_range(-1.0..1.0)));
            z.extend((0..3).map(|c| if c == i % 3 { 1.0 } else { 0.0 }));
        }
        let z = Tensor::from_vec(&[m, STYLE_DIM + 3], z);
        let eps = (0..m).map(|_| rng.gen::<f64>()).collect();
        Tiny { gen, disc, real, z, eps }
    }

    fn param_mut(&mut self, of_generator: bool, tensor: usize, index: usize) -> &mut f64 {
        let p = if of_generator { &mut self.gen.net.params } else { &mut self.disc.net.params };
        &mut p.tensors[tensor].value.data_mut()[index]
    }

    /// Critic loss and, when `with_grad`, its gradient w.r.t. the critic weights.
    fn critic(&self, mode: LossMode, with_grad: bool) -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let gb = self.gen.net.params.bind(&mut g);
        let db = self.disc.net.params.bind(&mut g);
        let z = g.leaf(self.z.clone());
        let fake = self.gen.forward(&mut g, &gb, z).unwrap();
        let real = g.leaf(self.real.clone());
        let obj = critic_objective(&mut g, &self.disc, &db, real, fake, &self.eps, mode, 10.0).unwrap();
        let value = g.value(obj.loss).item();
        if !with_grad {
            return (value, Vec::new());
        }
        let grads = g.grad(obj.loss, &db).unwrap();
        (value, grads.iter().map(|&v| g.value(v).data().to_vec()).collect())
    }

    /// Generator loss and, when `with_grad`, its gradient w.r.t. the generator weights.
    fn generator(&self, mode: LossMode, with_grad: bool) -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let gb = self.gen.net.params.bind(&mut g);
        let db = self.disc.net.params.bind(&mut g);
        let z = g.leaf(self.z.clone());
        let fake = self.gen.forward(&mut g, &gb, z).unwrap();
        let loss = generator_objective(&mut g, &self.disc, &db, fake, mode).unwrap();
        let value = g.value(loss).item();
        if !with_grad {
            return (value, Vec::new());
        }
        let grads = g.grad(loss, &gb).unwrap();
        (value, grads.iter().map(|&v| g.value(v).data().to_vec()).collect())
    }
}

/// Compares analytic and central-difference gradients coordinate by coordinate.
fn compare(
    tiny: &mut Tiny,
    analytic: &[Vec<f64>],
    of_generator: bool,
    eval: impl Fn(&Tiny) -> f64,
    within: &mut usize,
    total: &mut usize,
) {
    for (ti, grad) in analytic.iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            let orig = *tiny.param_mut(of_generator, ti, j);
            *tiny.param_mut(of_generator, ti, j) = orig + FD_STEP;
            let up = eval(tiny);
            *tiny.param_mut(of_generator, ti, j) = orig - FD_STEP;
            let down = eval(tiny);
            *tiny.param_mut(of_generator, ti, j) = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            *total += 1;
            if rel_err(a, numeric) < FD_TOLERANCE {
                *within += 1;
            }
        }
    }
}

/// Finite-difference check of critic and generator gradients on 8x8
/// networks under the penalized Wasserstein and the minimax objectives.
pub fn gradient_check() -> GradientReport {
    let start = Instant::now();
    let (mut within, mut total) = (0, 0);
    let mut parameters = 0;
    for (mode, head, seed) in [
        (LossMode::WganGp, DiscriminatorHead::Critic, 1),
        (LossMode::Dcgan, DiscriminatorHead::Probability, 2),
    ] {
        let mut tiny = Tiny::new(head, seed);
        parameters = parameters.max(tiny.gen.net.params.num_scalars() + tiny.disc.net.params.num_scalars());
        let (_, dgrad) = tiny.critic(mode, true);
        compare(&mut tiny, &dgrad, false, |t| t.critic(mode, false).0, &mut within, &mut total);
        let (_, ggrad) = tiny.generator(mode, true);
        compare(&mut tiny, &ggrad, true, |t| t.generator(mode, false).0, &mut within, &mut total);
    }
    GradientReport {
        coordinates: total,
        within_tolerance: within,
        parameters,
        elapsed: start.elapsed(),
    }
}

pub struct PenaltyReport {
    pub value: f64,
    pub grad_rel_err: f64,
}

/// Linear critic `D(x) = <u, x>` with `|u| = 3` and `lambda = 10`.
pub fn penalty_oracle() -> PenaltyReport {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let dim = 64;
    let raw: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    let u: Vec<f64> = raw.iter().map(|v| 3.0 * v / norm).collect();
    let x: Vec<f64> = (0..4 * dim).map(|_| rng.gen::<f64>()).collect();

    let eval = |u: &[f64], with_grad: bool| -> (f64, Vec<f64>) {
        let mut g = Graph::new();
        let xv = g.leaf(Tensor::from_vec(&[4, dim], x.clone()));
        let uv = g.leaf(Tensor::from_vec(&[dim, 1], u.to_vec()));
        let p = gradient_penalty(&mut g, xv, 10.0, |g, xs| Ok(g.matmul(xs, uv, false, false))).unwrap();
        let value = g.value(p.value).item();
        if !with_grad {
            return (value, Vec::new());
        }
        let gu = g.grad(p.value, &[uv]).unwrap()[0];
        (value, g.value(gu).data().to_vec())
    };
    let (value, analytic) = eval(&u, true);
    let mut worst: f64 = 0.0;
    for j in 0..dim {
        let mut up = u.clone();
        up[j] += FD_STEP;
        let mut down = u.clone();
        down[j] -= FD_STEP;
        let numeric = (eval(&up, false).0 - eval(&down, false).0) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(analytic[j], numeric));
    }
    PenaltyReport {
        value,
        grad_rel_err: worst,
    }
}

// ---------------------------------------------------------------- metrics

pub fn random_binary(size: usize, rng: &mut ChaCha8Rng) -> GlyphImage {
    let density: f64 = rng.gen_range(0.05..0.5);
    GlyphImage::from_clamped(size, (0..size * size).map(|_| if rng.gen_bool(density) { 1.0 } else { 0.0 })).unwrap()
}

/// Ink pixels of either glyph with no ink of the other within Chebyshev
/// distance 1, by exhaustive pixel-pair search.
pub fn brute_pseudo_hamming(a: &GlyphImage, b: &GlyphImage) -> f64 {
    let s = a.size() as i64;
    let ink = |img: &GlyphImage| -> Vec<(i64, i64)> {
        (0..s * s)
            .filter(|&p| img.pixels()[p as usize] >= 0.5)
            .map(|p| (p / s, p % s))
            .collect()
    };
    let (pa, pb) = (ink(a), ink(b));
    let lonely = |from: &[(i64, i64)], to: &[(i64, i64)]| {
        from.iter()
            .filter(|p| !to.iter().any(|q| (p.0 - q.0).abs() <= 1 && (p.1 - q.1).abs() <= 1))
            .count()
    };
    (lonely(&pa, &pb) + lonely(&pb, &pa)) as f64
}

pub fn brute_consistency(d: &[Vec<f64>]) -> f64 {
    let c = d[0].len() as f64;
    let mut sum = 0.0;
    let mut rows = 0.0;
    for row in d {
        let mean = row.iter().sum::<f64>() / c;
        if mean > 0.0 {
            sum += row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / mean;
            rows += 1.0;
        }
    }
    sum / (rows * c)
}

pub fn brute_diversity(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| {
        let r = p * (v.len() - 1) as f64;
        let (i, f) = (r.floor() as usize, r - r.floor());
        if f == 0.0 {
            v[i]
        } else {
            v[i] * (1.0 - f) + v[i + 1] * f
        }
    };
    (q(0.75) - q(0.25)) / (2.0 * q(0.5))
}

pub struct MetricReport {
    pub hamming_mismatches: usize,
    pub nearest_mismatches: usize,
    pub consistency_err: f64,
    pub diversity_err: f64,
    pub hand_consistency: f64,
    pub hand_diversity: f64,
}

impl MetricReport {
    pub fn ok(&self) -> bool {
        self.hamming_mismatches == 0
            && self.nearest_mismatches == 0
            && self.consistency_err <= 1e-12
            && self.diversity_err <= 1e-12
            && self.hand_consistency == 0.5
            && self.hand_diversity == 1.0 / 3.0
    }
}

pub fn metric_oracles() -> MetricReport {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let params = DistanceParams::default();

    let hamming_mismatches = (0..100)
        .filter(|_| {
            let (a, b) = (random_binary(16, &mut rng), random_binary(16, &mut rng));
            pseudo_hamming(&a, &b, params).unwrap() != brute_pseudo_hamming(&a, &b)
        })
        .count();

    let (styles, classes, fonts) = (3, 4, 5);
    let train = GlyphDataset::new(fonts, classes, (0..fonts * classes).map(|_| random_binary(16, &mut rng)).collect()).unwrap();
    let generated: Vec<Vec<GlyphImage>> = (0..styles)
        .map(|_| (0..classes).map(|_| random_binary(16, &mut rng)).collect())
        .collect();
    let dm = nearest_training_distance(&generated, &train, params).unwrap();
    let mut nearest_mismatches = 0;
    for (s, row) in generated.iter().enumerate() {
        for (c, img) in row.iter().enumerate() {
            let best = (0..fonts)
                .map(|f| brute_pseudo_hamming(img, train.get(f, c)))
                .fold(f64::INFINITY, f64::min);
            if dm.get(s, c) != best {
                nearest_mismatches += 1;
            }
        }
    }

    let mut consistency_err: f64 = 0.0;
    let mut diversity_err: f64 = 0.0;
    for _ in 0..20 {
        let (n, c) = (rng.gen_range(2..12), rng.gen_range(2..8));
        let d: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| rng.gen_range(0.0..300.0)).collect()).collect();
        let dm = DistanceMatrix::new(n, c, d.concat(), vec![0; n * c]).unwrap();
        let got = style_consistency(&dm).unwrap().value;
        consistency_err = consistency_err.max((got - brute_consistency(&d)).abs());
        let values: Vec<f64> = (0..rng.gen_range(4..40)).map(|_| rng.gen_range(1.0..300.0)).collect();
        diversity_err = diversity_err.max((diversity_metric(&values).unwrap() - brute_diversity(&values)).abs());
    }

    let hand = DistanceMatrix::new(1, 2, vec![1.0, 3.0], vec![0, 0]).unwrap();
    MetricReport {
        hamming_mismatches,
        nearest_mismatches,
        consistency_err,
        diversity_err,
        hand_consistency: style_consistency(&hand).unwrap().value,
        hand_diversity: diversity_metric(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
    }
}

// ---------------------------------------------------------------- accounting

/// Counts updates and checks that each one touched only its own network.
#[derive(Default)]
pub struct Auditor {
    before: (u64, u64),
    pub critic: usize,
    pub generator: usize,
    pub violations: Vec<String>,
}

impl<T: glyphforge_core::Scalar> TrainObserver<T> for Auditor {
    fn before_update(&mut self, _: UpdateKind, _: usize, t: &Trainer<T>) {
        self.before = (t.generator.net.params.fingerprint(), t.discriminator.net.params.fingerprint());
    }

    fn after_update(&mut self, kind: UpdateKind, class: usize, t: &Trainer<T>) {
        let after = (t.generator.net.params.fingerprint(), t.discriminator.net.params.fingerprint());
        let (theta_same, w_same) = (after.0 == self.before.0, after.1 == self.before.1);
        match kind {
            UpdateKind::Critic => {
                self.critic += 1;
                if !theta_same || w_same {
                    self.violations.push(format!("critic step for class {class}"));
                }
            }
            UpdateKind::Generator => {
                self.generator += 1;
                if theta_same || !w_same {
                    self.violations.push(format!("generator step for class {class}"));
                }
            }
        }
    }
}
