use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::graph::softmax;
use crate::optim::{Adam, AdamConfig};
use crate::params::{GradBuffer, ParamId, ParamStore};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for LinearConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            lr: 1e-2,
            seed: 0,
        }
    }
}

/// Multinomial logistic regression `softmax(x W + b)` trained with
/// cross-entropy and Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmax {
    params: ParamStore<f64>,
    classes: usize,
}

const W: ParamId = ParamId(0);
const B: ParamId = ParamId(1);

impl LinearSoftmax {
    pub fn zeros(dim: usize, classes: usize) -> Self {
        let mut params = ParamStore::new();
        params.insert("weight", Tensor::zeros(&[dim, classes]));
        params.insert("bias", Tensor::zeros(&[classes]));
        Self { params, classes }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.params.get(W).rows()
    }

    /// `xs` is `[N, D]`, `ys` holds class indices below `classes`.
    pub fn fit(xs: &Tensor<f64>, ys: &[usize], classes: usize, cfg: &LinearConfig) -> Result<Self> {
        let n = xs.rows();
        if n == 0 || n != ys.len() {
            return Err(Error::InvalidArgument(alloc::format!("{n} samples for {} labels", ys.len())));
        }
        if let Some(&bad) = ys.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidArgument(alloc::format!("label {bad} out of range for {classes} classes")));
        }
        let d = xs.cols();
        let mut model = Self::zeros(d, classes);
        let mut adam = Adam::new(&model.params, AdamConfig { lr: cfg.lr, ..Default::default() });
        let mut rng = crate::rng_from_seed(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();
        let bs = cfg.batch_size.max(1);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(bs) {
                let mut gw = vec![0.0; d * classes];
                let mut gb = vec![0.0; classes];
                let scale = 1.0 / chunk.len() as f64;
                for &i in chunk {
                    let x = xs.row(i);
                    let mut p = model.probs(x);
                    p[ys[i]] -= 1.0;
                    for (r, &xv) in x.iter().enumerate() {
                        for (c, &pv) in p.iter().enumerate() {
                            gw[r * classes + c] += scale * xv * pv;
                        }
                    }
                    for (g, &pv) in gb.iter_mut().zip(&p) {
                        *g += scale * pv;
                    }
                }
                let mut grads = GradBuffer::for_store(&model.params);
                grads.accumulate(W, &Tensor::new(&[d, classes], gw)?);
                grads.accumulate(B, &Tensor::new(&[classes], gb)?);
                adam.step(&mut model.params, &grads)?;
            }
        }
        Ok(model)
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let w = self.params.get(W);
        let mut z = self.params.get(B).data().to_vec();
        for (r, &xv) in x.iter().enumerate() {
            for (zc, &wv) in z.iter_mut().zip(w.row(r)) {
                *zc += xv * wv;
            }
        }
        z
    }

    pub fn probs(&self, x: &[f64]) -> Vec<f64> {
        let z = self.logits(x);
        let k = z.len();
        softmax(&Tensor::new(&[k], z).expect("k >= 1")).into_data()
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::model::argmax(&self.probs(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_points() {
        let xs = Tensor::from_f64(&[4, 2], &[1.0, 0.0, 0.9, 0.1, 0.0, 1.0, 0.1, 0.9]).unwrap();
        let ys = [0, 0, 1, 1];
        let m = LinearSoftmax::fit(&xs, &ys, 2, &LinearConfig::default()).unwrap();
        for (i, &y) in ys.iter().enumerate() {
            assert_eq!(m.predict(xs.row(i)), y);
        }
    }

    #[test]
    fn untrained_is_uniform() {
        let m = LinearSoftmax::zeros(3, 4);
        assert_eq!(m.probs(&[1.0, 2.0, 3.0]), vec![0.25; 4]);
        assert_eq!(m.predict(&[1.0, 2.0, 3.0]), 0);
    }

    #[test]
    fn rejects_bad_labels() {
        let xs = Tensor::from_f64(&[1, 1], &[1.0]).unwrap();
        assert!(LinearSoftmax::fit(&xs, &[2], 2, &LinearConfig::default()).is_err());
    }
}
