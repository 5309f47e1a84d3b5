//! Gaussian posterior approximation over model parameters from training
//! trajectories (SWA / SWAG), ensemble sampling, and soft-label evaluation
//! against annotator disagreement.
//!
//! The pipeline is:
//!
//! 1. [`nn::Trainer`] runs SGD on a small softmax classifier and pushes one
//!    [`trajectory::ParamSnapshot`] per epoch into a [`trajectory::SwagCollector`].
//! 2. [`trajectory::SwagCollector::finalize`] yields an immutable
//!    [`trajectory::PosteriorApprox`] (SWA mean, diagonal variance, deviation matrix).
//! 3. [`posterior`] draws parameter vectors from the low-rank plus diagonal
//!    Gaussian and averages the softmax outputs of the sampled models.
//! 4. [`eval`] scores predictions by hard-label accuracy and by cross-entropy
//!    against the annotation distribution.

pub mod data;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod posterior;
pub mod rng;
pub mod trajectory;

pub use error::{Error, ErrorKind, Result};
pub use posterior::{PredictionDistribution, SamplingConfig};
pub use trajectory::{ParamSnapshot, PosteriorApprox, SwagCollector};

/// Default number of retained deviation columns (K).
pub const DEFAULT_RANK_CAP: usize = 20;

/// Default number of posterior samples averaged at prediction time (N).
pub const DEFAULT_NUM_SAMPLES: usize = 20;
