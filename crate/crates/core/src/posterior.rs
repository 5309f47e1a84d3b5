//! Sampling from the SWAG posterior and ensemble-averaged prediction.
//!
//! A draw is
//!
//! ```text
//! θ = θ_SWA + √scale · ( √(diag_var / 2) ⊙ z₁ + D z₂ / √(2(K−1)) )
//! ```
//!
//! with `z₁ ~ N(0, I_dim)` and `z₂ ~ N(0, I_K)`, which has covariance
//! `scale · ½(diag(diag_var) + DDᵀ/(K−1))` without ever forming a dense
//! matrix. Draw `n` of a run uses random stream `n` of the configured seed,
//! so samples are reproducible regardless of evaluation order.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{forward, ModelSpec};
use crate::rng::stream_rng;
use crate::trajectory::{ParamSnapshot, PosteriorApprox};
use crate::DEFAULT_NUM_SAMPLES;

/// Tolerance on `Σ p = 1` for a valid distribution.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// Probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PredictionDistribution {
    probs: Vec<f64>,
}

impl PredictionDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("no classes".into()));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidDistribution(format!(
                "entry {p} outside [0, 1]"
            )));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {total}"
            )));
        }
        Ok(Self { probs })
    }

    /// Wraps a softmax output that is a distribution by construction.
    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOLERANCE);
        Self { probs }
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidDistribution("no classes".into()));
        }
        Ok(Self {
            probs: vec![1.0 / classes as f64; classes],
        })
    }

    pub fn one_hot(classes: usize, class: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::InvalidDistribution(format!(
                "class {class} outside {classes} classes"
            )));
        }
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Element-wise mean; identical members average to themselves exactly.
    pub fn mean_of(members: &[PredictionDistribution]) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::InvalidDistribution("empty ensemble".into()))?;
        let mut mean = first.probs.clone();
        for (n, m) in members.iter().enumerate().skip(1) {
            if m.num_classes() != mean.len() {
                return Err(Error::DimensionMismatch {
                    what: "ensemble member",
                    expected: mean.len(),
                    found: m.num_classes(),
                });
            }
            let count = (n + 1) as f64;
            for (acc, &p) in mean.iter_mut().zip(&m.probs) {
                *acc += (p - *acc) / count;
            }
        }
        Ok(Self { probs: mean })
    }
}

impl TryFrom<Vec<f64>> for PredictionDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PredictionDistribution> for Vec<f64> {
    fn from(d: PredictionDistribution) -> Self {
        d.probs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Number of posterior draws averaged per prediction (N).
    pub num_samples: usize,
    pub seed: u64,
    /// Covariance multiplier; 0 collapses every draw onto the SWA mean.
    pub scale: f64,
    /// Ignore the low-rank term and sample from the diagonal part only.
    pub diag_only: bool,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            num_samples: DEFAULT_NUM_SAMPLES,
            seed: 0,
            scale: 1.0,
            diag_only: false,
        }
    }
}

impl SamplingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be at least 1".into()));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "scale must be a finite non-negative number, got {}",
                self.scale
            )));
        }
        Ok(())
    }
}

/// Draw number `draw_index` from the posterior; deterministic in
/// `(posterior, cfg.seed, cfg.scale, draw_index)`.
pub fn sample_params(
    p: &PosteriorApprox,
    cfg: &SamplingConfig,
    draw_index: u64,
) -> Result<ParamSnapshot> {
    cfg.validate()?;
    let rank = p.rank();
    let use_low_rank = !cfg.diag_only;
    if use_low_rank && rank < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            found: rank,
        });
    }
    let dim = p.dim();
    let mut rng = stream_rng(cfg.seed, draw_index);
    let z1: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let z2: Vec<f64> = (0..rank).map(|_| StandardNormal.sample(&mut rng)).collect();

    let sqrt_scale = cfg.scale.sqrt();
    let low_rank_coef = if use_low_rank {
        1.0 / (2.0 * (rank as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut low_rank = vec![0.0; dim];
    if use_low_rank {
        for (col, &z) in p.deviation_columns().iter().zip(&z2) {
            for (acc, &d) in low_rank.iter_mut().zip(col) {
                *acc += d * z;
            }
        }
    }
    let values = p
        .mean()
        .iter()
        .zip(p.diag_var())
        .zip(z1.iter().zip(&low_rank))
        .map(|((&m, &v), (&z, &lr))| {
            let diag = std::f64::consts::FRAC_1_SQRT_2 * v.sqrt() * z;
            m + sqrt_scale * (diag + low_rank_coef * lr)
        })
        .collect();
    ParamSnapshot::new(values)
}

/// Draws `0..cfg.num_samples`.
pub fn draw_samples(p: &PosteriorApprox, cfg: &SamplingConfig) -> Result<Vec<ParamSnapshot>> {
    cfg.validate()?;
    (0..cfg.num_samples as u64)
        .map(|n| sample_params(p, cfg, n))
        .collect()
}

fn check_arch(spec: &ModelSpec, dim: usize) -> Result<()> {
    if spec.param_count() != dim {
        return Err(Error::DimensionMismatch {
            what: "model parameter count",
            expected: spec.param_count(),
            found: dim,
        });
    }
    Ok(())
}

/// One forward pass per input.
pub fn predict_point<X: AsRef<[f64]>>(
    params: &ParamSnapshot,
    spec: &ModelSpec,
    inputs: &[X],
) -> Result<Vec<PredictionDistribution>> {
    check_arch(spec, params.dim())?;
    inputs
        .iter()
        .map(|x| forward(spec, params, x.as_ref()))
        .collect()
}

/// Ensemble output with the per-member predictions retained.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsemblePrediction {
    /// Averaged prediction per input.
    pub mean: Vec<PredictionDistribution>,
    /// `members[i][n]` is sample `n`'s prediction on input `i`.
    pub members: Vec<Vec<PredictionDistribution>>,
}

/// Like [`predict_ensemble`] but keeps every member's output. The same
/// `N` parameter draws are shared by all inputs.
pub fn predict_ensemble_members<X: AsRef<[f64]>>(
    p: &PosteriorApprox,
    spec: &ModelSpec,
    inputs: &[X],
    cfg: &SamplingConfig,
) -> Result<EnsemblePrediction> {
    check_arch(spec, p.dim())?;
    let samples = draw_samples(p, cfg)?;
    let per_sample: Vec<Vec<PredictionDistribution>> = samples
        .iter()
        .map(|s| predict_point(s, spec, inputs))
        .collect::<Result<_>>()?;
    let members: Vec<Vec<PredictionDistribution>> = (0..inputs.len())
        .map(|i| per_sample.iter().map(|preds| preds[i].clone()).collect())
        .collect();
    let mean = members
        .iter()
        .map(|m| PredictionDistribution::mean_of(m))
        .collect::<Result<_>>()?;
    Ok(EnsemblePrediction { mean, members })
}

/// `(1/N) Σₙ softmax(model(θₙ, x))` for every input.
pub fn predict_ensemble<X: AsRef<[f64]>>(
    p: &PosteriorApprox,
    spec: &ModelSpec,
    inputs: &[X],
    cfg: &SamplingConfig,
) -> Result<Vec<PredictionDistribution>> {
    Ok(predict_ensemble_members(p, spec, inputs, cfg)?.mean)
}
