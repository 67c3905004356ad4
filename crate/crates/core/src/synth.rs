//! Synthetic feature-space dataset: an emotional segment drawn around a class
//! prototype, embedded among context frames drawn around a shared neutral
//! prototype.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{EmotionLabel, FeatureSequence};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub classes: usize,
    pub dim: usize,
    pub frames: usize,
    pub per_class: usize,
    pub seg_min: usize,
    pub seg_max: usize,
    /// Distance of every class prototype from the neutral prototype.
    pub separation: f64,
    /// Noise of emotional frames.
    pub sigma: f64,
    /// Noise of context frames; `None` means `sigma`.
    pub context_sigma: Option<f64>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            classes: 6,
            dim: 64,
            frames: 30,
            per_class: 60,
            seg_min: 6,
            seg_max: 15,
            separation: 4.0,
            sigma: 0.5,
            context_sigma: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: alloc::string::String| Err(Error::InvalidArgument(msg));
        if self.classes == 0 || self.dim == 0 || self.per_class == 0 {
            return bad(format!(
                "classes ({}), dim ({}) and per_class ({}) must be positive",
                self.classes, self.dim, self.per_class
            ));
        }
        if !(2 <= self.seg_min && self.seg_min <= self.seg_max && self.seg_max <= self.frames) {
            return bad(format!(
                "segment range [{}, {}] infeasible for {} frames (need 2 <= min <= max <= M)",
                self.seg_min, self.seg_max, self.frames
            ));
        }
        let ctx = self.context_sigma.unwrap_or(self.sigma);
        if !(self.sigma >= 0.0 && ctx >= 0.0 && self.separation >= 0.0) {
            return bad(format!(
                "sigma ({}), context sigma ({ctx}) and separation ({}) must be non-negative",
                self.sigma, self.separation
            ));
        }
        Ok(())
    }
}

/// Generated dataset together with the prototypes it was drawn from.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub neutral: Vec<f32>,
    pub prototypes: Vec<Vec<f32>>,
    pub sequences: Vec<FeatureSequence<f32>>,
}

pub fn generate(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = crate::rng_from_seed(cfg.seed);
    let normal = |rng: &mut crate::Rng| -> f64 { StandardNormal.sample(rng) };

    let neutral: Vec<f64> = (0..cfg.dim).map(|_| normal(&mut rng)).collect();
    let prototypes: Vec<Vec<f64>> = (0..cfg.classes)
        .map(|_| {
            let dir: Vec<f64> = (0..cfg.dim).map(|_| normal(&mut rng)).collect();
            let norm = libm::sqrt(dir.iter().map(|x| x * x).sum::<f64>()).max(1e-12);
            neutral
                .iter()
                .zip(&dir)
                .map(|(&n, &u)| n + cfg.separation * u / norm)
                .collect()
        })
        .collect();
    let neutral: Vec<f32> = neutral.iter().map(|&x| x as f32).collect();
    let prototypes: Vec<Vec<f32>> = prototypes
        .iter()
        .map(|p| p.iter().map(|&x| x as f32).collect())
        .collect();

    let ctx_sigma = cfg.context_sigma.unwrap_or(cfg.sigma);
    let (m, d) = (cfg.frames, cfg.dim);
    let mut sequences = Vec::with_capacity(cfg.classes * cfg.per_class);
    for class in 0..cfg.classes {
        for i in 0..cfg.per_class {
            let len = rng.random_range(cfg.seg_min..=cfg.seg_max);
            let start = rng.random_range(1..=m - len + 1);
            let end = start + len - 1;
            let mut data = Vec::with_capacity(m * d);
            for frame in 1..=m {
                let inside = frame >= start && frame <= end;
                let (mu, sigma) = if inside {
                    (&prototypes[class], cfg.sigma)
                } else {
                    (&neutral, ctx_sigma)
                };
                for &mv in mu {
                    let z = normal(&mut rng);
                    data.push(if sigma == 0.0 { mv } else { mv + (sigma * z) as f32 });
                }
            }
            let id = format!("syn-c{class}-{i:04}");
            sequences.push(FeatureSequence::new(
                id,
                Tensor::new(&[m, d], data)?,
                EmotionLabel(class),
                Some((start, end)),
            )?);
        }
    }
    Ok(Synthetic {
        neutral,
        prototypes,
        sequences,
    })
}
