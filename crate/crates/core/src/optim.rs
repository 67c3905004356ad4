//! Adam with bias correction.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::params::{GradBuffer, ParamStore};
use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer state. Each parameter keeps its own step counter, so a tensor
/// that receives no gradient in a step is left exactly as it was.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: Vec<u64>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        Self {
            config,
            first: params.values().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            second: params.values().iter().map(|p| Tensor::zeros(p.shape())).collect(),
            steps: alloc::vec![0; params.len()],
        }
    }

    /// Step count of parameter `i`.
    pub fn step_count(&self, i: usize) -> u64 {
        self.steps[i]
    }

    /// Applies one update to every parameter that has a gradient in `grads`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &GradBuffer<T>) -> Result<()> {
        for id in grads.touched() {
            let g = grads.get(id).expect("touched");
            if g.shape() != params.get(id).shape() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    left: params.get(id).shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient(params.name(id).into()));
            }
        }
        let c = self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (ob1, ob2) = (T::one() - b1, T::one() - b2);
        for id in grads.touched() {
            let g = grads.get(id).expect("touched");
            let i = id.0;
            self.steps[i] += 1;
            let t = self.steps[i] as i32;
            let bc1 = T::from_f64(1.0 - libm::pow(c.beta1, t as f64));
            let bc2 = T::from_f64(1.0 - libm::pow(c.beta2, t as f64));
            let lr = T::from_f64(c.lr);
            let eps = T::from_f64(c.eps);
            let p = params.get_mut(id).data_mut();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for k in 0..p.len() {
                let gk = g.data()[k];
                m[k] = b1 * m[k] + ob1 * gk;
                v[k] = b2 * v[k] + ob2 * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] = p[k] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamId;

    fn store(v: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::scalar(v));
        s
    }

    #[test]
    fn zero_gradient_no_update() {
        let mut p = store(0.7);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = GradBuffer::for_store(&p);
        g.accumulate(ParamId(0), &Tensor::scalar(0.0));
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p.get(ParamId(0)).data(), &[0.7]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = store(1.0);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = GradBuffer::for_store(&p);
        g.accumulate(ParamId(0), &Tensor::scalar(1.0));
        adam.step(&mut p, &g).unwrap();
        let expected = 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.get(ParamId(0)).data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn untouched_params_and_counters_stay() {
        let mut p = ParamStore::<f64>::new();
        p.insert("a", Tensor::scalar(1.0));
        p.insert("b", Tensor::scalar(2.0));
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = GradBuffer::for_store(&p);
        g.accumulate(ParamId(0), &Tensor::scalar(0.5));
        adam.step(&mut p, &g).unwrap();
        adam.step(&mut p, &g).unwrap();
        assert_eq!(p.get(ParamId(1)).data(), &[2.0]);
        assert_eq!((adam.step_count(0), adam.step_count(1)), (2, 0));
    }

    #[test]
    fn non_finite_gradient_names_param() {
        let mut p = store(1.0);
        let mut adam = Adam::new(&p, AdamConfig::default());
        let mut g = GradBuffer::for_store(&p);
        g.accumulate(ParamId(0), &Tensor::scalar(f64::NAN));
        assert_eq!(adam.step(&mut p, &g), Err(Error::NonFiniteGradient("w".into())));
        assert_eq!(p.get(ParamId(0)).data(), &[1.0]);
    }

    #[test]
    fn deterministic_trajectory() {
        let run = || {
            let mut rng = crate::rng_from_seed(9);
            let mut p = ParamStore::<f64>::new();
            p.insert("w", Tensor::randn(&[4], 1.0, &mut rng));
            let mut adam = Adam::new(&p, AdamConfig::default());
            for _ in 0..10 {
                let mut g = GradBuffer::for_store(&p);
                let grad = p.get(ParamId(0)).map(|x| 2.0 * x - 0.3);
                g.accumulate(ParamId(0), &grad);
                adam.step(&mut p, &g).unwrap();
            }
            p
        };
        let (a, b) = (run(), run());
        let bits = |s: &ParamStore<f64>| s.values()[0].data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}
