use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layers::ParamSet;
use crate::nn::tensor::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 0.0002,
            beta1: 0.5,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

/// Adam moments for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = || params.tensors.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        AdamState {
            config,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update using the gradients held in `params`.
    ///
    /// Non-finite gradients abort the step before anything is modified.
    pub fn step(&mut self, params: &mut ParamSet<T>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::InvalidArgument(format!(
                "optimizer tracks {} tensors, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (p, m) in params.tensors.iter().zip(&self.m) {
            if p.grad.shape() != m.shape() {
                return Err(Error::shape(&p.name, format!("{:?}", m.shape()), p.grad.shape()));
            }
            if !p.grad.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {}", p.name)));
            }
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let (one_b1, one_b2) = (T::from_f64_lossy(1.0 - c.beta1), T::from_f64_lossy(1.0 - c.beta2));
        let corr1 = T::from_f64_lossy(1.0 - c.beta1.powi(self.t as i32));
        let corr2 = T::from_f64_lossy(1.0 - c.beta2.powi(self.t as i32));
        let alpha = T::from_f64_lossy(c.alpha);
        let eps = T::from_f64_lossy(c.eps);
        for ((p, m), v) in params.tensors.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let values = p.value.data_mut();
            let grads = p.grad.data();
            for (((w, &gr), mi), vi) in values
                .iter_mut()
                .zip(grads)
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + one_b1 * gr;
                *vi = b2 * *vi + one_b2 * gr * gr;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *w = *w - alpha * m_hat / (v_hat.sqrt() + eps);
            }
            if !p.value.is_finite() {
                return Err(Error::NonFinite(format!("parameter {}", p.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::ParamTensor;

    fn scalar_set(v: f64, g: f64) -> ParamSet<f64> {
        let mut p = ParamTensor::new("w", Tensor::from_vec(&[1], vec![v]));
        p.grad = Tensor::from_vec(&[1], vec![g]);
        ParamSet { tensors: vec![p] }
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut params = scalar_set(0.0, 1.0);
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.step(&mut params).unwrap();
        // m_hat = 1, v_hat = 1
        let want = -0.0002 * (1.0 / (1.0 + 1e-8));
        assert!((params.tensors[0].value.item() - want).abs() < 1e-18);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameter() {
        let mut params = scalar_set(0.7, 0.0);
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.step(&mut params).unwrap();
        assert_eq!(params.tensors[0].value.item(), 0.7);
    }

    #[test]
    fn two_steps_match_straight_line_recurrence() {
        let (alpha, b1, b2, eps, g) = (0.0002f64, 0.5f64, 0.99f64, 1e-8f64, 0.3f64);
        // independent evaluation of the recurrences
        let m1 = (1.0 - b1) * g;
        let v1 = (1.0 - b2) * g * g;
        let w1 = 1.0 - alpha * (m1 / (1.0 - b1)) / ((v1 / (1.0 - b2)).sqrt() + eps);
        let m2 = b1 * m1 + (1.0 - b1) * g;
        let v2 = b2 * v1 + (1.0 - b2) * g * g;
        let w2 = w1 - alpha * (m2 / (1.0 - b1 * b1)) / ((v2 / (1.0 - b2 * b2)).sqrt() + eps);

        let mut params = scalar_set(1.0, g);
        let mut st = AdamState::new(AdamConfig::default(), &params);
        st.step(&mut params).unwrap();
        assert!((params.tensors[0].value.item() - w1).abs() < 1e-15);
        st.step(&mut params).unwrap();
        assert!((params.tensors[0].value.item() - w2).abs() < 1e-15);
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let mut params = scalar_set(1.0, f64::NAN);
        let mut st = AdamState::new(AdamConfig::default(), &params);
        assert!(matches!(st.step(&mut params), Err(Error::NonFinite(_))));
        assert_eq!(params.tensors[0].value.item(), 1.0);
        assert_eq!(st.t, 0);
    }

    #[test]
    fn second_moment_stays_non_negative() {
        let mut params = scalar_set(1.0, -5.0);
        let mut st = AdamState::new(AdamConfig::default(), &params);
        for _ in 0..5 {
            st.step(&mut params).unwrap();
        }
        assert!(st.v[0].data()[0] >= 0.0);
    }
}
