use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::SoftLabelExample;
use crate::error::{Error, Result};
use crate::nn::softmax;
use crate::rng::{stream_rng, tag};

/// Synthetic soft-label dataset: equiprobable classes with unit-variance
/// Gaussian clusters, annotators voting from the exact Bayes posterior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub num_examples: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Euclidean distance between neighbouring class means.
    pub cluster_separation: f64,
    pub annotators: u32,
    pub seed: u64,
    /// Offset added to every feature vector; labels are unaffected.
    pub domain_shift: Option<Vec<f64>>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_examples: 600,
            num_classes: 3,
            feature_dim: 4,
            cluster_separation: 2.0,
            annotators: 5,
            seed: 0,
            domain_shift: None,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_examples == 0 {
            return Err(Error::Config("num_examples must be positive".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be at least 2".into()));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("feature_dim must be positive".into()));
        }
        if !(self.cluster_separation > 0.0 && self.cluster_separation.is_finite()) {
            return Err(Error::Config(format!(
                "cluster_separation must be positive, got {}",
                self.cluster_separation
            )));
        }
        if self.annotators == 0 {
            return Err(Error::Config("annotators must be at least 1".into()));
        }
        if let Some(shift) = &self.domain_shift {
            if shift.len() != self.feature_dim {
                return Err(Error::Config(format!(
                    "domain_shift has {} entries, feature_dim is {}",
                    shift.len(),
                    self.feature_dim
                )));
            }
            if shift.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config("domain_shift must be finite".into()));
            }
        }
        Ok(())
    }
}

/// Class means with neighbouring distance `cluster_separation`.
///
/// With `num_classes ≤ feature_dim` the means sit on scaled coordinate axes
/// (every pair equidistant); otherwise they lie on a circle in the first two
/// coordinates, or on a line when `feature_dim == 1`.
pub fn class_means(cfg: &SynthConfig) -> Vec<Vec<f64>> {
    let (c, d, sep) = (cfg.num_classes, cfg.feature_dim, cfg.cluster_separation);
    (0..c)
        .map(|k| {
            let mut m = vec![0.0; d];
            if c <= d {
                m[k] = sep / std::f64::consts::SQRT_2;
            } else if d >= 2 {
                let angle = std::f64::consts::TAU * k as f64 / c as f64;
                let radius = sep / (2.0 * (std::f64::consts::PI / c as f64).sin());
                m[0] = radius * angle.cos();
                m[1] = radius * angle.sin();
            } else {
                m[0] = sep * k as f64;
            }
            m
        })
        .collect()
}

/// Exact class posterior at an (unshifted) feature point under equal priors
/// and identity covariance.
pub fn bayes_posterior(means: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = means
        .iter()
        .map(|m| {
            -0.5 * m
                .iter()
                .zip(x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    softmax(&logits)
}

fn sample_categorical(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Deterministic in `cfg`. A shifted config reuses the unshifted draws, so
/// its features differ from the unshifted dataset by exactly the offset.
pub fn generate(cfg: &SynthConfig) -> Result<Vec<SoftLabelExample>> {
    cfg.validate()?;
    let means = class_means(cfg);
    let mut rng = stream_rng(cfg.seed, tag::SYNTH);
    let mut out = Vec::with_capacity(cfg.num_examples);
    for i in 0..cfg.num_examples {
        let class = rng.random_range(0..cfg.num_classes);
        let x: Vec<f64> = means[class]
            .iter()
            .map(|&m| {
                let z: f64 = StandardNormal.sample(&mut rng);
                m + z
            })
            .collect();
        let posterior = bayes_posterior(&means, &x);
        let mut votes = vec![0u32; cfg.num_classes];
        for _ in 0..cfg.annotators {
            votes[sample_categorical(&posterior, rng.random::<f64>())] += 1;
        }
        let features = match &cfg.domain_shift {
            Some(shift) => x.iter().zip(shift).map(|(a, s)| a + s).collect(),
            None => x,
        };
        out.push(SoftLabelExample::new(
            format!("synth-{}-{i:06}", cfg.seed),
            features,
            votes,
        )?);
    }
    Ok(out)
}
