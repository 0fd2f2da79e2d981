use crate::error::{Error, Result};
use crate::nn::graph::{Graph, Var};
use crate::scalar::Scalar;

/// Output of [`gradient_penalty`].
#[derive(Debug, Clone, Copy)]
pub struct Penalty {
    /// `lambda * mean_i (||grad_i||_2 - 1)^2`, differentiable w.r.t. the critic weights.
    pub value: Var,
    /// Input gradient of the critic, one row per sample.
    pub input_grad: Var,
    /// Per-sample gradient norms, shape `[n]`.
    pub norms: Var,
}

/// Soft Lipschitz penalty on a critic evaluated at `interpolates`.
///
/// `critic` maps a batch `[n, ...]` to scores `[n, 1]` (or `[n]`). The input
/// gradient is taken on the tape, so differentiating `value` afterwards
/// includes the second-order contribution to the critic's weights.
pub fn gradient_penalty<T: Scalar>(
    g: &mut Graph<T>,
    interpolates: Var,
    lambda: f64,
    critic: impl FnOnce(&mut Graph<T>, Var) -> Result<Var>,
) -> Result<Penalty> {
    if lambda.is_nan() || lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("penalty coefficient must be >= 0, got {lambda}")));
    }
    let shape = g.shape(interpolates).to_vec();
    if shape.is_empty() || shape[0] == 0 {
        return Err(Error::InvalidArgument("gradient penalty on an empty batch".into()));
    }
    let scores = critic(g, interpolates)?;
    // Samples are independent, so the gradient of the summed score holds every
    // per-sample input gradient.
    let total = g.sum_all(scores);
    let input_grad = g.grad(total, &[interpolates])?[0];
    let sq = g.mul(input_grad, input_grad);
    let sq_rows = g.sum_rows(sq);
    let norms = g.sqrt(sq_rows);
    let dev = g.affine(norms, T::one(), -T::one());
    let dev_sq = g.mul(dev, dev);
    let mean = g.mean_all(dev_sq);
    let value = g.scale(mean, T::from_f64_lossy(lambda));
    Ok(Penalty {
        value,
        input_grad,
        norms,
    })
}
