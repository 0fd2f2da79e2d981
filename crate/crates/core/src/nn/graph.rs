//! Reverse-mode automatic differentiation on a recorded tape.
//!
//! Every vector-Jacobian product is itself recorded as tape operations, so a
//! gradient returned by [`Graph::grad`] can be differentiated again. The
//! gradient penalty relies on this: it takes the input gradient of the critic,
//! builds a loss from its norm and differentiates that loss w.r.t. the weights.
//!
//! Nodes are appended in evaluation order, so the tape index order is a valid
//! topological order for the backward sweep.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::nn::conv::ConvGeom;
use crate::nn::tensor::Tensor;
use crate::scalar::{gemm, Scalar};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, T),
    MaskMul(Var, Rc<Vec<T>>),
    ScaleRows(Var, Rc<Vec<T>>),
    Sigmoid(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    SafeRecip(Var),
    SumAll(Var),
    ExpandScalar(Var),
    SumRows(Var),
    ExpandRows(Var),
    Reshape(Var),
    MatMul(Var, Var, bool, bool),
    AddBias(Var, Var),
    ReduceLast(Var),
    BroadcastLast(Var),
    Conv(Var, Var, ConvGeom),
    ConvTranspose(Var, Var, ConvGeom),
    ConvWeightGrad(Var, Var, ConvGeom),
    LogSoftmax(Var),
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MatMul(a, b, ..) | AddBias(a, b) => vec![*a, *b],
            Conv(a, b, _) | ConvTranspose(a, b, _) | ConvWeightGrad(a, b, _) => vec![*a, *b],
            Affine(a, _) | MaskMul(a, _) | ScaleRows(a, _) | Sigmoid(a) | Softplus(a) | Exp(a) | Ln(a) | Sqrt(a)
            | SafeRecip(a) | SumAll(a) | ExpandScalar(a) | SumRows(a) | ExpandRows(a) | Reshape(a)
            | ReduceLast(a) | BroadcastLast(a) | LogSoftmax(a) => vec![*a],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Tape of recorded tensor operations.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a leaf. Whether gradients flow to it is decided per
    /// [`grad`](Self::grad) call by the targets requested.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    /// `scale * a + shift`.
    pub fn affine(&mut self, a: Var, scale: T, shift: T) -> Var {
        let value = self.value(a).map(|x| scale * x + shift);
        self.push(value, Op::Affine(a, scale))
    }

    pub fn scale(&mut self, a: Var, scale: T) -> Var {
        self.affine(a, scale, T::zero())
    }

    /// Elementwise product with a constant tensor of the same size.
    pub fn mask_mul(&mut self, a: Var, mask: Rc<Vec<T>>) -> Var {
        assert_eq!(self.value(a).numel(), mask.len(), "mask size mismatch");
        let src = self.value(a);
        let data = src.data().iter().zip(mask.iter()).map(|(&x, &m)| x * m).collect();
        let value = Tensor::from_vec(src.shape(), data);
        self.push(value, Op::MaskMul(a, mask))
    }

    /// Multiplies row `i` of `a` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, a: Var, factors: Rc<Vec<T>>) -> Var {
        let src = self.value(a);
        assert_eq!(src.rows(), factors.len(), "row factor count mismatch");
        let row = src.row_len();
        let data = src
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * factors[i / row])
            .collect();
        let value = Tensor::from_vec(src.shape(), data);
        self.push(value, Op::ScaleRows(a, factors))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: T) -> Var {
        let mask: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .map(|&x| if x > T::zero() { T::one() } else { slope })
            .collect();
        self.mask_mul(a, Rc::new(mask))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.leaky_relu(a, T::zero())
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    /// `ln(1 + e^a)`, evaluated without overflow.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        self.push(value, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.exp());
        self.push(value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.ln());
        self.push(value, Op::Ln(a))
    }

    /// Square root whose derivative at zero is taken as zero.
    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.sqrt());
        self.push(value, Op::Sqrt(a))
    }

    /// `1 / a`, with `0` where `a == 0`.
    pub fn safe_recip(&mut self, a: Var) -> Var {
        let value = self.value(a).map(safe_recip);
        self.push(value, Op::SafeRecip(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).sum());
        self.push(value, Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = T::from_usize(self.value(a).numel()).expect("size fits");
        let s = self.sum_all(a);
        self.scale(s, T::one() / n)
    }

    /// Broadcasts a one-element tensor to `shape`.
    pub fn expand_scalar(&mut self, s: Var, shape: &[usize]) -> Var {
        assert_eq!(self.value(s).numel(), 1, "expand_scalar expects one element");
        let value = Tensor::full(shape, self.value(s).item());
        self.push(value, Op::ExpandScalar(s))
    }

    /// Sums each row of `[n, ...]`, giving `[n]`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (n, row) = (src.rows(), src.row_len());
        let data = (0..n)
            .map(|i| src.data()[i * row..(i + 1) * row].iter().fold(T::zero(), |acc, &v| acc + v))
            .collect();
        let value = Tensor::from_vec(&[n], data);
        self.push(value, Op::SumRows(a))
    }

    /// Broadcasts `[n]` to `shape` whose leading dimension is `n`.
    pub fn expand_rows(&mut self, r: Var, shape: &[usize]) -> Var {
        let src = self.value(r);
        assert_eq!(src.numel(), shape[0], "expand_rows leading dimension mismatch");
        let row: usize = shape[1..].iter().product();
        let data = src.data().iter().flat_map(|&v| std::iter::repeat_n(v, row)).collect();
        let value = Tensor::from_vec(shape, data);
        self.push(value, Op::ExpandRows(r))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let value = self.value(a).reshaped(shape);
        self.push(value, Op::Reshape(a))
    }

    /// Matrix product of two rank-2 tensors, optionally transposed.
    pub fn matmul(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert!(sa.len() == 2 && sb.len() == 2, "matmul expects rank-2 operands");
        let (m, k) = if trans_a { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (k2, n) = if trans_b { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        assert_eq!(k, k2, "matmul inner dimension mismatch");
        let mut out = vec![T::zero(); m * n];
        gemm(m, k, n, self.value(a).data(), trans_a, self.value(b).data(), trans_b, &mut out, false);
        let value = Tensor::from_vec(&[m, n], out);
        self.push(value, Op::MatMul(a, b, trans_a, trans_b))
    }

    /// Adds `bias` (`[c]`) along the last dimension of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let src = self.value(a);
        let b = self.value(bias).data();
        let c = b.len();
        assert_eq!(src.shape().last().copied(), Some(c), "bias length mismatch");
        let data = src.data().iter().enumerate().map(|(i, &x)| x + b[i % c]).collect();
        let value = Tensor::from_vec(src.shape(), data);
        self.push(value, Op::AddBias(a, bias))
    }

    /// Sums over every dimension except the last.
    pub fn reduce_last(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let c = *src.shape().last().expect("rank >= 1");
        let mut out = vec![T::zero(); c];
        for (i, &x) in src.data().iter().enumerate() {
            out[i % c] = out[i % c] + x;
        }
        let value = Tensor::from_vec(&[c], out);
        self.push(value, Op::ReduceLast(a))
    }

    /// Repeats `[c]` over the leading dimensions of `shape`.
    pub fn broadcast_last(&mut self, b: Var, shape: &[usize]) -> Var {
        let src = self.value(b).data();
        let c = src.len();
        assert_eq!(shape.last().copied(), Some(c), "broadcast_last length mismatch");
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| src[i % c]).collect();
        let value = Tensor::from_vec(shape, data);
        self.push(value, Op::BroadcastLast(b))
    }

    pub fn conv2d(&mut self, x: Var, w: Var, geom: ConvGeom) -> Var {
        let n = self.value(x).rows();
        assert_eq!(self.value(x).row_len(), geom.input_len(), "conv input size");
        let out = geom.forward(self.value(x).data(), self.value(w).data(), n);
        let value = Tensor::from_vec(&[n, geom.out_h, geom.out_w, geom.out_c], out);
        self.push(value, Op::Conv(x, w, geom))
    }

    /// Transposed (fractionally strided) convolution: runs `geom` from its
    /// output side back to its input side.
    pub fn conv_transpose2d(&mut self, y: Var, w: Var, geom: ConvGeom) -> Var {
        let n = self.value(y).rows();
        assert_eq!(self.value(y).row_len(), geom.output_len(), "conv_transpose input size");
        let out = geom.transpose(self.value(y).data(), self.value(w).data(), n);
        let value = Tensor::from_vec(&[n, geom.in_h, geom.in_w, geom.in_c], out);
        self.push(value, Op::ConvTranspose(y, w, geom))
    }

    fn conv_weight_grad(&mut self, x: Var, gy: Var, geom: ConvGeom) -> Var {
        let n = self.value(x).rows();
        let out = geom.weight_grad(self.value(x).data(), self.value(gy).data(), n);
        let value = Tensor::from_vec(&geom.weight_shape(), out);
        self.push(value, Op::ConvWeightGrad(x, gy, geom))
    }

    /// Row-wise log-softmax of `[n, c]`.
    pub fn log_softmax(&mut self, a: Var) -> Var {
        let src = self.value(a);
        let (n, c) = (src.rows(), src.row_len());
        let mut out = Vec::with_capacity(n * c);
        for row in src.data().chunks(c) {
            let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
            let lse = max + row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln();
            out.extend(row.iter().map(|&v| v - lse));
        }
        let value = Tensor::from_vec(src.shape(), out);
        self.push(value, Op::LogSoftmax(a))
    }

    /// Gradients of the scalar `loss` with respect to `wrt`.
    ///
    /// The returned handles live on this graph and may be differentiated
    /// again. Targets that `loss` does not depend on receive zeros.
    pub fn grad(&mut self, loss: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Graph("backward called before any forward computation".into()));
        }
        if self.value(loss).numel() != 1 {
            return Err(Error::Graph(format!(
                "loss must be a scalar, got shape {:?}",
                self.shape(loss)
            )));
        }
        let end = loss.0 + 1;
        let mut relevant = vec![false; end];
        for w in wrt {
            if w.0 < end {
                relevant[w.0] = true;
            }
        }
        for i in 0..end {
            if !relevant[i] {
                relevant[i] = self.nodes[i].op.inputs().iter().any(|v| relevant[v.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        let seed = Tensor::full(self.shape(loss), T::one());
        grads[loss.0] = Some(self.leaf(seed));
        for i in (0..end).rev() {
            if !relevant[i] {
                continue;
            }
            let Some(g) = grads[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.vjp(Var(i), &op, g, &relevant) {
                grads[input.0] = Some(match grads[input.0] {
                    Some(existing) => self.add(existing, contribution),
                    None => contribution,
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Tensor::zeros(self.shape(w));
                    self.leaf(zeros)
                }
            })
            .collect())
    }

    fn vjp(&mut self, out: Var, op: &Op<T>, g: Var, relevant: &[bool]) -> Vec<(Var, Var)> {
        let want = |v: &Var| relevant[v.0];
        let mut res = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if want(a) {
                    res.push((*a, g));
                }
                if want(b) {
                    res.push((*b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(a) {
                    res.push((*a, g));
                }
                if want(b) {
                    let neg = self.scale(g, -T::one());
                    res.push((*b, neg));
                }
            }
            Op::Mul(a, b) => {
                if want(a) {
                    let ga = self.mul(g, *b);
                    res.push((*a, ga));
                }
                if want(b) {
                    let gb = self.mul(g, *a);
                    res.push((*b, gb));
                }
            }
            Op::Affine(a, scale) => {
                let ga = self.scale(g, *scale);
                res.push((*a, ga));
            }
            Op::MaskMul(a, mask) => {
                let ga = self.mask_mul(g, mask.clone());
                res.push((*a, ga));
            }
            Op::ScaleRows(a, factors) => {
                let ga = self.scale_rows(g, factors.clone());
                res.push((*a, ga));
            }
            Op::Sigmoid(a) => {
                let one_minus = self.affine(out, -T::one(), T::one());
                let slope = self.mul(out, one_minus);
                let ga = self.mul(g, slope);
                res.push((*a, ga));
            }
            Op::Softplus(a) => {
                let s = self.sigmoid(*a);
                let ga = self.mul(g, s);
                res.push((*a, ga));
            }
            Op::Exp(a) => {
                let ga = self.mul(g, out);
                res.push((*a, ga));
            }
            Op::Ln(a) => {
                let r = self.safe_recip(*a);
                let ga = self.mul(g, r);
                res.push((*a, ga));
            }
            Op::Sqrt(a) => {
                let r = self.safe_recip(out);
                let half = self.scale(r, T::from_f64_lossy(0.5));
                let ga = self.mul(g, half);
                res.push((*a, ga));
            }
            Op::SafeRecip(a) => {
                let sq = self.mul(out, out);
                let neg = self.scale(sq, -T::one());
                let ga = self.mul(g, neg);
                res.push((*a, ga));
            }
            Op::SumAll(a) => {
                let shape = self.shape(*a).to_vec();
                let ga = self.expand_scalar(g, &shape);
                res.push((*a, ga));
            }
            Op::ExpandScalar(a) => {
                let ga = self.sum_all(g);
                let shape = self.shape(*a).to_vec();
                let ga = self.reshape(ga, &shape);
                res.push((*a, ga));
            }
            Op::SumRows(a) => {
                let shape = self.shape(*a).to_vec();
                let ga = self.expand_rows(g, &shape);
                res.push((*a, ga));
            }
            Op::ExpandRows(a) => {
                let ga = self.sum_rows(g);
                res.push((*a, ga));
            }
            Op::Reshape(a) => {
                let shape = self.shape(*a).to_vec();
                let ga = self.reshape(g, &shape);
                res.push((*a, ga));
            }
            Op::MatMul(a, b, ta, tb) => {
                let (ta, tb) = (*ta, *tb);
                if want(a) {
                    let ga = if ta { self.matmul(*b, g, tb, true) } else { self.matmul(g, *b, false, !tb) };
                    res.push((*a, ga));
                }
                if want(b) {
                    let gb = if tb { self.matmul(g, *a, true, ta) } else { self.matmul(*a, g, !ta, false) };
                    res.push((*b, gb));
                }
            }
            Op::AddBias(a, bias) => {
                if want(a) {
                    res.push((*a, g));
                }
                if want(bias) {
                    let gb = self.reduce_last(g);
                    res.push((*bias, gb));
                }
            }
            Op::ReduceLast(a) => {
                let shape = self.shape(*a).to_vec();
                let ga = self.broadcast_last(g, &shape);
                res.push((*a, ga));
            }
            Op::BroadcastLast(a) => {
                let ga = self.reduce_last(g);
                res.push((*a, ga));
            }
            Op::Conv(x, w, geom) => {
                if want(x) {
                    let gx = self.conv_transpose2d(g, *w, *geom);
                    res.push((*x, gx));
                }
                if want(w) {
                    let gw = self.conv_weight_grad(*x, g, *geom);
                    res.push((*w, gw));
                }
            }
            Op::ConvTranspose(y, w, geom) => {
                if want(y) {
                    let gy = self.conv2d(g, *w, *geom);
                    res.push((*y, gy));
                }
                if want(w) {
                    let gw = self.conv_weight_grad(g, *y, *geom);
                    res.push((*w, gw));
                }
            }
            Op::ConvWeightGrad(x, gy, geom) => {
                if want(x) {
                    let gx = self.conv_transpose2d(*gy, g, *geom);
                    res.push((*x, gx));
                }
                if want(gy) {
                    let ggy = self.conv2d(*x, g, *geom);
                    res.push((*gy, ggy));
                }
            }
            Op::LogSoftmax(a) => {
                let shape = self.shape(*a).to_vec();
                let probs = self.exp(out);
                let row_sum = self.sum_rows(g);
                let spread = self.expand_rows(row_sum, &shape);
                let weighted = self.mul(probs, spread);
                let ga = self.sub(g, weighted);
                res.push((*a, ga));
            }
        }
        res
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

fn safe_recip<T: Scalar>(x: T) -> T {
    if x == T::zero() {
        T::zero()
    } else {
        T::one() / x
    }
}
