use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::{Error, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub clusters: usize,
    pub max_iter: usize,
    /// Stop when the relative inertia change drops to this value.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            clusters: 256,
            max_iter: 100,
            tol: 1e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// `[clusters, D]`.
    pub centers: Tensor<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.iter().enumerate() {
        let d = sq_dist(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations. `points` is `[N, D]`.
pub fn kmeans_fit<T: Scalar>(points: &Tensor<T>, cfg: &KMeansConfig) -> Result<KMeans> {
    let n = points.rows();
    let k = cfg.clusters;
    if k == 0 || points.shape().len() != 2 || n < k {
        return Err(Error::InvalidArgument(alloc::format!("k-means needs at least {k} >= 1 points, got {n}")));
    }
    let pts: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).iter().map(|x| x.as_f64()).collect()).collect();
    let mut rng = crate::rng_from_seed(cfg.seed);

    let mut centers: Vec<Vec<f64>> = vec![pts[rng.random_range(0..n)].clone()];
    let mut d2: Vec<f64> = pts.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument(alloc::format!(
                "degenerate pool: fewer than {k} distinct points"
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 && target < w {
                pick = i;
                break;
            }
            target -= w;
        }
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        centers.push(pts[pick].clone());
        let c = centers.last().unwrap();
        for (d, p) in d2.iter_mut().zip(&pts) {
            *d = d.min(sq_dist(p, c));
        }
    }

    let dim = pts[0].len();
    let mut assign = vec![0usize; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    for it in 0..cfg.max_iter {
        iterations = it + 1;
        let mut cur = 0.0;
        for (a, p) in assign.iter_mut().zip(&pts) {
            let (i, d) = nearest(&centers, p);
            *a = i;
            cur += d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (&a, p) in assign.iter().zip(&pts) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for ((c, s), &m) in centers.iter_mut().zip(sums).zip(&counts) {
            if m > 0 {
                *c = s.into_iter().map(|v| v / m as f64).collect();
            }
        }
        let done = cur == 0.0 || (inertia.is_finite() && (inertia - cur).abs() <= cfg.tol * inertia);
        inertia = cur;
        if done {
            break;
        }
    }
    // inertia of the final centers
    inertia = pts.iter().map(|p| nearest(&centers, p).1).sum();
    let flat: Vec<f64> = centers.into_iter().flatten().collect();
    Ok(KMeans {
        centers: Tensor::new(&[k, dim], flat)?,
        inertia,
        iterations,
    })
}
