use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::conv::ConvGeom;
use crate::nn::graph::{Graph, Var};
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

/// Standard deviation of the zero-mean normal used for weight init.
pub const INIT_STD: f64 = 0.02;

/// A named trainable tensor with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamTensor<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(name: impl Into<String>, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        ParamTensor {
            name: name.into(),
            value,
            grad,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: Vec<ParamTensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(|p| p.value.numel()).sum()
    }

    /// Places every tensor on the graph as a leaf, in declaration order.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|p| g.leaf(p.value.clone())).collect()
    }

    /// Copies gradient values from the graph into the accumulators.
    pub fn store_grads(&mut self, g: &Graph<T>, grads: &[Var]) {
        assert_eq!(grads.len(), self.tensors.len());
        for (p, &gv) in self.tensors.iter_mut().zip(grads) {
            p.grad = g.value(gv).clone();
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.tensors {
            p.grad.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    pub fn grads_are_zero(&self) -> bool {
        self.tensors.iter().all(|p| p.grad.data().iter().all(|v| *v == T::zero()))
    }

    /// Order-sensitive FNV-1a hash over the exact bit patterns of all values.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        let mut buf = Vec::with_capacity(8);
        for p in &self.tensors {
            for &v in p.value.data() {
                buf.clear();
                v.write_le(&mut buf);
                for &b in &buf {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x100000001b3);
                }
            }
        }
        h
    }

    pub fn clamp(&mut self, bound: T) {
        for p in &mut self.tensors {
            p.value.data_mut().iter_mut().for_each(|v| *v = v.max(-bound).min(bound));
        }
    }

    pub fn max_abs(&self) -> T {
        self.tensors
            .iter()
            .flat_map(|p| p.value.data().iter())
            .fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// One layer of a feed-forward stack. Spatial tensors are NHWC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv2d { geom: ConvGeom },
    /// Fractionally strided convolution from `geom`'s output side to its input side.
    ConvTranspose2d { geom: ConvGeom },
    Linear { inputs: usize, outputs: usize },
    Relu,
    LeakyRelu { slope: f64 },
    Sigmoid,
    BatchNorm { features: usize, momentum: f64, eps: f64 },
    Dropout { rate: f64 },
    /// Reshapes each sample, keeping the batch dimension.
    Reshape { dims: Vec<usize> },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::ConvTranspose2d { .. } => "conv_transpose2d",
            LayerSpec::Linear { .. } => "linear",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Sigmoid => "sigmoid",
            LayerSpec::BatchNorm { .. } => "batch_norm",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Reshape { .. } => "reshape",
        }
    }

    /// Parameter shapes in binding order.
    pub fn param_shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        match self {
            LayerSpec::Conv2d { geom } => vec![("weight", geom.weight_shape().to_vec()), ("bias", vec![geom.out_c])],
            LayerSpec::ConvTranspose2d { geom } => {
                vec![("weight", geom.weight_shape().to_vec()), ("bias", vec![geom.in_c])]
            }
            LayerSpec::Linear { inputs, outputs } => {
                vec![("weight", vec![*inputs, *outputs]), ("bias", vec![*outputs])]
            }
            LayerSpec::BatchNorm { features, .. } => vec![("gamma", vec![*features]), ("beta", vec![*features])],
            _ => vec![],
        }
    }

    /// Expected per-sample input shape, when the layer constrains it.
    fn expected_input(&self) -> Option<Vec<usize>> {
        match self {
            LayerSpec::Conv2d { geom } => Some(vec![geom.in_h, geom.in_w, geom.in_c]),
            LayerSpec::ConvTranspose2d { geom } => Some(vec![geom.out_h, geom.out_w, geom.out_c]),
            LayerSpec::Linear { inputs, .. } => Some(vec![*inputs]),
            LayerSpec::BatchNorm { features, .. } => Some(vec![*features]),
            _ => None,
        }
    }
}

/// Per-call state for forward passes.
pub struct ForwardCtx<'a> {
    pub train: bool,
    pub rng: Option<&'a mut ChaCha8Rng>,
    /// Batch statistics observed by batch-norm layers in training mode,
    /// as `(layer index, mean, biased variance)`.
    pub bn_batch_stats: Vec<(usize, Vec<f64>, Vec<f64>)>,
}

impl<'a> ForwardCtx<'a> {
    pub fn eval() -> Self {
        ForwardCtx {
            train: false,
            rng: None,
            bn_batch_stats: Vec::new(),
        }
    }

    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        ForwardCtx {
            train: true,
            rng: Some(rng),
            bn_batch_stats: Vec::new(),
        }
    }
}

/// Running statistics kept by a batch-norm layer for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

/// Applies one layer. `params` are the layer's bound parameters; `running`
/// is required for batch norm in inference mode.
pub fn layer_forward<T: Scalar>(
    spec: &LayerSpec,
    g: &mut Graph<T>,
    params: &[Var],
    input: Var,
    running: Option<&RunningStats<T>>,
    ctx: &mut ForwardCtx<'_>,
    layer_index: usize,
) -> Result<Var> {
    let shape = g.shape(input).to_vec();
    if shape.is_empty() || shape[0] == 0 {
        return Err(Error::shape(spec.name(), "non-empty batch", &shape));
    }
    let n = shape[0];
    if let Some(expected) = spec.expected_input() {
        if shape[1..] != expected[..] {
            return Err(Error::shape(spec.name(), format!("[batch, {expected:?}]"), &shape));
        }
    }
    Ok(match spec {
        LayerSpec::Conv2d { geom } => {
            let y = g.conv2d(input, params[0], *geom);
            g.add_bias(y, params[1])
        }
        LayerSpec::ConvTranspose2d { geom } => {
            let y = g.conv_transpose2d(input, params[0], *geom);
            g.add_bias(y, params[1])
        }
        LayerSpec::Linear { .. } => {
            let y = g.matmul(input, params[0], false, false);
            g.add_bias(y, params[1])
        }
        LayerSpec::Relu => g.relu(input),
        LayerSpec::LeakyRelu { slope } => g.leaky_relu(input, T::from_f64_lossy(*slope)),
        LayerSpec::Sigmoid => g.sigmoid(input),
        LayerSpec::BatchNorm { eps, .. } => {
            let eps = T::from_f64_lossy(*eps);
            if ctx.train {
                if n < 2 {
                    return Err(Error::shape("batch_norm", "batch of at least 2 in training mode", &shape));
                }
                let inv_n = T::one() / T::from_usize(n).expect("batch fits");
                let sum = g.reduce_last(input);
                let mean = g.scale(sum, inv_n);
                let mean_b = g.broadcast_last(mean, &shape);
                let centered = g.sub(input, mean_b);
                let sq = g.mul(centered, centered);
                let sq_sum = g.reduce_last(sq);
                let var = g.scale(sq_sum, inv_n);
                let shifted = g.affine(var, T::one(), eps);
                let std = g.sqrt(shifted);
                let inv_std = g.safe_recip(std);
                let inv_b = g.broadcast_last(inv_std, &shape);
                ctx.bn_batch_stats.push((
                    layer_index,
                    g.value(mean).data().iter().map(|v| v.to_f64_lossy()).collect(),
                    g.value(var).data().iter().map(|v| v.to_f64_lossy()).collect(),
                ));
                let normed = g.mul(centered, inv_b);
                let gamma = g.broadcast_last(params[0], &shape);
                let scaled = g.mul(normed, gamma);
                g.add_bias(scaled, params[1])
            } else {
                let stats = running.ok_or_else(|| Error::Graph("batch norm without running statistics".into()))?;
                let scale: Vec<T> = g
                    .value(params[0])
                    .data()
                    .iter()
                    .zip(&stats.var)
                    .map(|(&gm, &v)| gm / (v + eps).sqrt())
                    .collect();
                let shift: Vec<T> = stats.mean.iter().zip(&scale).map(|(&m, &s)| -m * s).collect();
                let scale_b = Tensor::from_vec(&[scale.len()], scale);
                let scale_v = g.leaf(scale_b);
                let scale_full = g.broadcast_last(scale_v, &shape);
                let scaled = g.mul(input, scale_full);
                let shift_v = g.leaf(Tensor::from_vec(&[shift.len()], shift));
                let shifted = g.add_bias(scaled, shift_v);
                g.add_bias(shifted, params[1])
            }
        }
        LayerSpec::Dropout { rate } => {
            if !ctx.train || *rate == 0.0 {
                input
            } else {
                let rng = ctx
                    .rng
                    .as_deref_mut()
                    .ok_or_else(|| Error::Graph("dropout in training mode needs an rng".into()))?;
                let keep = 1.0 - rate;
                let scale = T::from_f64_lossy(1.0 / keep);
                let numel = g.value(input).numel();
                let mask: Vec<T> = (0..numel)
                    .map(|_| if rng.gen::<f64>() < keep { scale } else { T::zero() })
                    .collect();
                g.mask_mul(input, Rc::new(mask))
            }
        }
        LayerSpec::Reshape { dims } => {
            let per_sample: usize = shape[1..].iter().product();
            if per_sample != dims.iter().product::<usize>() {
                return Err(Error::shape("reshape", format!("[batch, {} elements]", dims.iter().product::<usize>()), &shape));
            }
            let mut target = vec![n];
            target.extend_from_slice(dims);
            g.reshape(input, &target)
        }
    })
}

/// A feed-forward stack of layers with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential<T> {
    pub layers: Vec<LayerSpec>,
    pub params: ParamSet<T>,
    /// Index of each layer's first parameter in `params`.
    offsets: Vec<usize>,
    pub running: Vec<Option<RunningStats<T>>>,
    pub bn_updates: u64,
}

impl<T: Scalar> Sequential<T> {
    /// Builds the stack with DCGAN-style initialization: weights from
    /// `N(0, 0.02)`, biases zero, batch-norm scale one.
    pub fn new(layers: Vec<LayerSpec>, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut params = ParamSet::default();
        let mut offsets = Vec::with_capacity(layers.len());
        let mut running = Vec::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            offsets.push(params.len());
            for (pname, shape) in layer.param_shapes() {
                let numel: usize = shape.iter().product();
                let data: Vec<T> = match (layer, pname) {
                    (LayerSpec::BatchNorm { .. }, "gamma") => vec![T::one(); numel],
                    (_, "weight") => (0..numel).map(|_| T::from_f64_lossy(normal.sample(rng))).collect(),
                    _ => vec![T::zero(); numel],
                };
                params
                    .tensors
                    .push(ParamTensor::new(format!("{i}.{}.{pname}", layer.name()), Tensor::from_vec(&shape, data)));
            }
            running.push(match layer {
                LayerSpec::BatchNorm { features, .. } => Some(RunningStats {
                    mean: vec![T::zero(); *features],
                    var: vec![T::one(); *features],
                }),
                _ => None,
            });
        }
        Sequential {
            layers,
            params,
            offsets,
            running,
            bn_updates: 0,
        }
    }

    /// Runs the stack on `input` with parameters `bound` (from [`ParamSet::bind`]).
    pub fn forward(&self, g: &mut Graph<T>, bound: &[Var], input: Var, ctx: &mut ForwardCtx<'_>) -> Result<Var> {
        let mut x = input;
        for (i, layer) in self.layers.iter().enumerate() {
            let count = layer.param_shapes().len();
            let p = &bound[self.offsets[i]..self.offsets[i] + count];
            x = layer_forward(layer, g, p, x, self.running[i].as_ref(), ctx, i)?;
        }
        Ok(x)
    }

    /// Folds batch statistics from a training forward pass into the running averages.
    pub fn apply_bn_stats(&mut self, stats: &[(usize, Vec<f64>, Vec<f64>)]) {
        for (idx, mean, var) in stats {
            let LayerSpec::BatchNorm { momentum, .. } = self.layers[*idx] else {
                continue;
            };
            let running = self.running[*idx].as_mut().expect("batch norm has running stats");
            for (r, &m) in running.mean.iter_mut().zip(mean) {
                *r = T::from_f64_lossy((1.0 - momentum) * r.to_f64_lossy() + momentum * m);
            }
            for (r, &v) in running.var.iter_mut().zip(var) {
                *r = T::from_f64_lossy((1.0 - momentum) * r.to_f64_lossy() + momentum * v);
            }
        }
        self.bn_updates += 1;
    }

    pub fn contains(&self, pred: impl Fn(&LayerSpec) -> bool) -> bool {
        self.layers.iter().any(pred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn transposed_conv_doubles_spatial_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let geom = ConvGeom::halving(8, 16, 32);
        let net = Sequential::<f32>::new(vec![LayerSpec::ConvTranspose2d { geom }], &mut rng);
        let mut g = Graph::new();
        let p = net.params.bind(&mut g);
        let x = g.leaf(Tensor::zeros(&[2, 4, 4, 32]));
        let y = net.forward(&mut g, &p, x, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(g.shape(y), &[2, 8, 8, 16]);
    }

    #[test]
    fn shape_mismatch_names_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::<f32>::new(vec![LayerSpec::Linear { inputs: 3, outputs: 2 }], &mut rng);
        let mut g = Graph::new();
        let p = net.params.bind(&mut g);
        let x = g.leaf(Tensor::zeros(&[2, 4]));
        let err = net.forward(&mut g, &p, x, &mut ForwardCtx::eval()).unwrap_err();
        assert!(err.to_string().contains("linear"), "{err}");
    }

    #[test]
    fn dropout_is_identity_in_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::<f32>::new(vec![LayerSpec::Dropout { rate: 0.5 }], &mut rng);
        let mut g = Graph::new();
        let data = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        let x = g.leaf(data.clone());
        let y = net.forward(&mut g, &[], x, &mut ForwardCtx::eval()).unwrap();
        assert_eq!(g.value(y), &data);
    }

    #[test]
    fn dropout_train_zeroes_or_rescales() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = Sequential::<f32>::new(vec![LayerSpec::Dropout { rate: 0.5 }], &mut rng);
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[4, 64], 1.0));
        let mut drop_rng = ChaCha8Rng::seed_from_u64(9);
        let y = net.forward(&mut g, &[], x, &mut ForwardCtx::train(&mut drop_rng)).unwrap();
        let vals = g.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
        assert!(vals.contains(&0.0) && vals.contains(&2.0));
    }

    #[test]
    fn batch_norm_eval_uses_running_stats_deterministically() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Sequential::<f64>::new(
            vec![LayerSpec::BatchNorm {
                features: 2,
                momentum: 0.1,
                eps: 1e-5,
            }],
            &mut rng,
        );
        net.running[0] = Some(RunningStats {
            mean: vec![1.0, -1.0],
            var: vec![4.0, 1.0],
        });
        let run = |net: &Sequential<f64>| {
            let mut g = Graph::new();
            let p = net.params.bind(&mut g);
            let x = g.leaf(Tensor::from_vec(&[1, 2], vec![3.0, 0.0]));
            let y = net.forward(&mut g, &p, x, &mut ForwardCtx::eval()).unwrap();
            g.value(y).data().to_vec()
        };
        let a = run(&net);
        assert_eq!(a, run(&net));
        assert!((a[0] - 2.0 / (4.0f64 + 1e-5).sqrt()).abs() < 1e-12);
        assert!((a[1] - 1.0 / (1.0f64 + 1e-5).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn batch_norm_train_normalizes_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = Sequential::<f64>::new(
            vec![LayerSpec::BatchNorm {
                features: 1,
                momentum: 0.5,
                eps: 0.0,
            }],
            &mut rng,
        );
        let mut g = Graph::new();
        let p = net.params.bind(&mut g);
        let x = g.leaf(Tensor::from_vec(&[4, 1], vec![1.0, 2.0, 3.0, 4.0]));
        let mut drop_rng = ChaCha8Rng::seed_from_u64(1);
        let mut ctx = ForwardCtx::train(&mut drop_rng);
        let y = net.forward(&mut g, &p, x, &mut ctx).unwrap();
        let out = g.value(y).data();
        let mean: f64 = out.iter().sum::<f64>() / 4.0;
        let var: f64 = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-12);
        let stats = std::mem::take(&mut ctx.bn_batch_stats);
        net.apply_bn_stats(&stats);
        let r = net.running[0].as_ref().unwrap();
        assert!((r.mean[0] - 1.25).abs() < 1e-12);
        assert!((r.var[0] - (0.5 + 0.5 * 1.25)).abs() < 1e-12);
    }
}
