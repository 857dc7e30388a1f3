//! Trainable parameter tensors and the Adam optimizer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::scalar::Scalar;

/// A weight matrix with its gradient accumulator. Only the value is serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Param<T> {
    pub value: Matrix<T>,
    #[serde(skip)]
    pub grad: Matrix<T>,
}

impl<T: Scalar> Param<T> {
    pub fn new(value: Matrix<T>) -> Self {
        let (r, c) = value.shape();
        Param {
            value,
            grad: Matrix::zeros(r, c),
        }
    }

    pub fn zero_grad(&mut self) {
        if self.grad.shape() != self.value.shape() {
            let (r, c) = self.value.shape();
            self.grad = Matrix::zeros(r, c);
        } else {
            self.grad.fill_zero();
        }
    }

    /// Gradient buffer, allocated on first use after deserialization.
    pub fn grad_mut(&mut self) -> &mut Matrix<T> {
        if self.grad.shape() != self.value.shape() {
            self.zero_grad();
        }
        &mut self.grad
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

impl<T: PartialEq> PartialEq for Param<T> {
    fn eq(&self, other: &Self) -> bool {
        self.value == other.value
    }
}

/// Named mutable views over a component's parameters, in a fixed order.
pub type ParamsMut<'a, T> = Vec<(String, &'a mut Param<T>)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
struct Moments<T> {
    m: Matrix<T>,
    v: Matrix<T>,
    t: i32,
}

/// Adam with per-parameter step counts; moments are keyed by parameter name.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    cfg: AdamConfig,
    state: BTreeMap<String, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam {
            cfg,
            state: BTreeMap::new(),
        }
    }

    /// Applies one update to `param` from its accumulated gradient.
    pub fn step(&mut self, name: &str, param: &mut Param<T>, lr: f64) {
        let (r, c) = param.shape();
        let st = self.state.entry(name.to_string()).or_insert_with(|| Moments {
            m: Matrix::zeros(r, c),
            v: Matrix::zeros(r, c),
            t: 0,
        });
        st.t += 1;
        let b1 = T::of(self.cfg.beta1);
        let b2 = T::of(self.cfg.beta2);
        let one = T::one();
        let bc1 = one - b1.powi(st.t);
        let bc2 = one - b2.powi(st.t);
        let lr = T::of(lr);
        let eps = T::of(self.cfg.eps);
        let grad = param.grad_mut().as_slice().to_vec();
        let value = param.value.as_mut_slice();
        let m = st.m.as_mut_slice();
        let v = st.v.as_mut_slice();
        for i in 0..value.len() {
            let g = grad[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            value[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut p = Param::new(Matrix::<f64>::from_rows(&[vec![3.0, -2.0]]));
        let mut opt = Adam::new(AdamConfig::default());
        for _ in 0..2000 {
            p.zero_grad();
            let g: Vec<f64> = p.value.as_slice().iter().map(|x| 2.0 * x).collect();
            p.grad.as_mut_slice().copy_from_slice(&g);
            opt.step("w", &mut p, 0.05);
        }
        assert!(p.value.max_abs() < 1e-3, "{:?}", p.value);
    }

    #[test]
    fn zero_gradient_leaves_value_unchanged() {
        let mut p = Param::new(Matrix::<f32>::from_rows(&[vec![1.0, 2.0]]));
        let before = p.value.clone();
        let mut opt = Adam::new(AdamConfig::default());
        p.zero_grad();
        opt.step("w", &mut p, 0.1);
        assert_eq!(p.value, before);
    }
}
