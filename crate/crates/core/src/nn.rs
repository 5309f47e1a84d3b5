//! Feed-forward softmax classifier with exact backpropagation and an SGD
//! loop that pushes one parameter snapshot per epoch into a [`SwagCollector`].
//!
//! Parameters are one flat vector. Each layer contributes its weight matrix
//! (`n_out × n_in`, row-major) followed by its bias (`n_out`).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SoftLabelExample;
use crate::error::{Error, Result};
use crate::posterior::PredictionDistribution;
use crate::rng::{stream_rng, tag};
use crate::trajectory::{check_finite, DeviationMode, ParamSnapshot, SwagCollector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    layer_sizes: Vec<usize>,
    #[serde(default)]
    activation: Activation,
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    n_in: usize,
    n_out: usize,
    offset: usize,
}

impl Layer {
    fn weights<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        &params[self.offset..self.offset + self.n_in * self.n_out]
    }

    fn bias<'p>(&self, params: &'p [f64]) -> &'p [f64] {
        let start = self.offset + self.n_in * self.n_out;
        &params[start..start + self.n_out]
    }

    fn len(&self) -> usize {
        (self.n_in + 1) * self.n_out
    }
}

impl ModelSpec {
    /// `layer_sizes` is `[input, hidden..., classes]`.
    pub fn new(layer_sizes: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = Self {
            layer_sizes,
            activation,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks invariants; call after deserializing.
    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Config(
                "model needs at least an input and an output layer".into(),
            ));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        if self.num_classes() < 2 {
            return Err(Error::Config("model needs at least 2 output classes".into()));
        }
        Ok(())
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// `Σ (n_in + 1) · n_out` over consecutive layers.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    n_in: w[0],
                    n_out: w[1],
                    offset,
                };
                offset += layer.len();
                layer
            })
            .collect()
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                found: params.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "feature vector",
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Seeded init: every parameter of a layer is drawn from
    /// `U(−1/√n_in, 1/√n_in)`.
    pub fn init_params(&self, seed: u64) -> ParamSnapshot {
        let mut rng = stream_rng(seed, tag::INIT);
        let mut values = Vec::with_capacity(self.param_count());
        for layer in self.layers() {
            let bound = 1.0 / (layer.n_in as f64).sqrt();
            values.extend((0..layer.len()).map(|_| rng.random_range(-bound..bound)));
        }
        ParamSnapshot::new(values).expect("finite init")
    }
}

/// Activations retained for the backward pass.
struct Trace {
    /// Layer inputs: `inputs[0]` is x, `inputs[l]` the output of hidden layer `l-1`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Vec<f64>>,
    probs: Vec<f64>,
}

fn affine(layer: &Layer, params: &[f64], input: &[f64]) -> Vec<f64> {
    let w = layer.weights(params);
    layer
        .bias(params)
        .iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &w[o * layer.n_in..(o + 1) * layer.n_in];
            b + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn run_forward(spec: &ModelSpec, params: &[f64], x: &[f64]) -> Trace {
    let layers = spec.layers();
    let last = layers.len() - 1;
    let mut inputs = vec![x.to_vec()];
    let mut pre = Vec::with_capacity(last);
    let mut logits = Vec::new();
    for (l, layer) in layers.iter().enumerate() {
        let z = affine(layer, params, &inputs[l]);
        if l == last {
            logits = z;
        } else {
            inputs.push(z.iter().map(|&v| spec.activation.apply(v)).collect());
            pre.push(z);
        }
    }
    Trace {
        inputs,
        pre,
        probs: softmax(&logits),
    }
}

/// Softmax output of the network for one input.
pub fn forward(spec: &ModelSpec, params: &ParamSnapshot, x: &[f64]) -> Result<PredictionDistribution> {
    spec.check_params(params.values())?;
    spec.check_input(x)?;
    let probs = run_forward(spec, params.values(), x).probs;
    check_finite(&probs)?;
    Ok(PredictionDistribution::from_softmax(probs))
}

/// `−Σ t_c ln p_c` for a single example.
pub fn loss(spec: &ModelSpec, params: &ParamSnapshot, x: &[f64], target: &PredictionDistribution) -> Result<f64> {
    check_target(spec, target)?;
    let p = forward(spec, params, x)?;
    Ok(-target
        .probs()
        .iter()
        .zip(p.probs())
        .filter(|(&t, _)| t > 0.0)
        .map(|(&t, &q)| t * q.ln())
        .sum::<f64>())
}

fn check_target(spec: &ModelSpec, target: &PredictionDistribution) -> Result<()> {
    if target.num_classes() != spec.num_classes() {
        return Err(Error::DimensionMismatch {
            what: "target distribution",
            expected: spec.num_classes(),
            found: target.num_classes(),
        });
    }
    Ok(())
}

/// Exact gradient of the cross-entropy between `target` and the network
/// output, with respect to every parameter.
pub fn grad(
    spec: &ModelSpec,
    params: &ParamSnapshot,
    x: &[f64],
    target: &PredictionDistribution,
) -> Result<Vec<f64>> {
    spec.check_params(params.values())?;
    spec.check_input(x)?;
    check_target(spec, target)?;
    let mut out = vec![0.0; spec.param_count()];
    accumulate_grad(spec, params.values(), x, target.probs(), 1.0, &mut out);
    Ok(out)
}

/// Adds `weight · ∇CE` into `out`. Inputs are assumed validated.
fn accumulate_grad(
    spec: &ModelSpec,
    params: &[f64],
    x: &[f64],
    target: &[f64],
    weight: f64,
    out: &mut [f64],
) {
    let layers = spec.layers();
    let trace = run_forward(spec, params, x);
    // softmax + CE: dL/dz = p − t
    let mut delta: Vec<f64> = trace
        .probs
        .iter()
        .zip(target)
        .map(|(p, t)| p - t)
        .collect();

    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &trace.inputs[l];
        let w_start = layer.offset;
        let b_start = layer.offset + layer.n_in * layer.n_out;
        for (o, &d) in delta.iter().enumerate() {
            let row = &mut out[w_start + o * layer.n_in..w_start + (o + 1) * layer.n_in];
            for (g, &a) in row.iter_mut().zip(input) {
                *g += weight * d * a;
            }
            out[b_start + o] += weight * d;
        }
        if l == 0 {
            break;
        }
        let w = layer.weights(params);
        let pre = &trace.pre[l - 1];
        delta = (0..layer.n_in)
            .map(|i| {
                let back: f64 = (0..layer.n_out)
                    .map(|o| w[o * layer.n_in + i] * delta[o])
                    .sum();
                back * spec.activation.derivative(pre[i], input[i])
            })
            .collect();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// First epoch (0-based) whose end-of-epoch parameters are collected.
    pub swa_start_epoch: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 8,
            learning_rate: 0.1,
            swa_start_epoch: 20,
            seed: 0,
            l2: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.swa_start_epoch >= self.epochs {
            return Err(Error::Config(format!(
                "swa_start_epoch {} must be below epochs {}",
                self.swa_start_epoch, self.epochs
            )));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        Ok(())
    }

    pub fn snapshot_count(&self) -> usize {
        self.epochs - self.swa_start_epoch
    }
}

/// Everything needed to continue training after a restart.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamSnapshot,
    pub collector: SwagCollector,
    /// Number of completed epochs.
    pub epochs_done: usize,
    pub epoch_losses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    /// Final-epoch parameters (the model without averaging).
    pub base: ParamSnapshot,
    pub collector: SwagCollector,
    /// Mean training cross-entropy after each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Epoch-at-a-time SGD driver on majority-vote targets.
pub struct Trainer<'a> {
    spec: &'a ModelSpec,
    cfg: &'a TrainConfig,
    data: &'a [SoftLabelExample],
    state: TrainState,
}

impl<'a> Trainer<'a> {
    pub fn new(
        spec: &'a ModelSpec,
        cfg: &'a TrainConfig,
        data: &'a [SoftLabelExample],
        rank_cap: usize,
        mode: DeviationMode,
    ) -> Result<Self> {
        let collector = SwagCollector::with_mode(spec.param_count(), rank_cap, mode)?;
        let state = TrainState {
            params: spec.init_params(cfg.seed),
            collector,
            epochs_done: 0,
            epoch_losses: Vec::new(),
        };
        Self::resume(spec, cfg, data, state)
    }

    pub fn resume(
        spec: &'a ModelSpec,
        cfg: &'a TrainConfig,
        data: &'a [SoftLabelExample],
        state: TrainState,
    ) -> Result<Self> {
        spec.validate()?;
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        for ex in data {
            spec.check_input(&ex.features).map_err(|_| {
                Error::Data(format!(
                    "example {}: feature length {} does not match model input {}",
                    ex.example_id,
                    ex.features.len(),
                    spec.input_dim()
                ))
            })?;
            if ex.gold >= spec.num_classes() {
                return Err(Error::Data(format!(
                    "example {}: gold class {} outside {} classes",
                    ex.example_id,
                    ex.gold,
                    spec.num_classes()
                )));
            }
        }
        spec.check_params(state.params.values())?;
        if state.collector.dim() != spec.param_count() {
            return Err(Error::DimensionMismatch {
                what: "collector",
                expected: spec.param_count(),
                found: state.collector.dim(),
            });
        }
        let expected_snapshots = state.epochs_done.saturating_sub(cfg.swa_start_epoch);
        if state.epochs_done > cfg.epochs
            || state.collector.count() != expected_snapshots
            || state.epoch_losses.len() != state.epochs_done
        {
            return Err(Error::Data(format!(
                "inconsistent training state: {} epochs done, {} snapshots, {} losses",
                state.epochs_done,
                state.collector.count(),
                state.epoch_losses.len()
            )));
        }
        Ok(Self {
            spec,
            cfg,
            data,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn is_done(&self) -> bool {
        self.state.epochs_done >= self.cfg.epochs
    }

    /// Runs one epoch of mini-batch SGD; returns the post-epoch training loss.
    pub fn run_epoch(&mut self) -> Result<f64> {
        if self.is_done() {
            return Err(Error::Config("all epochs already completed".into()));
        }
        let epoch = self.state.epochs_done;
        let classes = self.spec.num_classes();
        let dim = self.spec.param_count();
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut stream_rng(self.cfg.seed, tag::SHUFFLE + epoch as u64));

        let mut params = self.state.params.values().to_vec();
        let mut g = vec![0.0; dim];
        let mut target = vec![0.0; classes];
        for batch in order.chunks(self.cfg.batch_size) {
            g.iter_mut().for_each(|v| *v = 0.0);
            let w = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &self.data[i];
                target.iter_mut().for_each(|v| *v = 0.0);
                target[ex.gold] = 1.0;
                accumulate_grad(self.spec, &params, &ex.features, &target, w, &mut g);
            }
            for (p, gi) in params.iter_mut().zip(&g) {
                *p -= self.cfg.learning_rate * (gi + self.cfg.l2 * *p);
            }
        }
        let params = ParamSnapshot::new(params)?;

        let loss = mean_gold_loss(self.spec, params.values(), self.data);
        if !loss.is_finite() {
            return Err(Error::NonFinite { index: epoch });
        }
        if epoch >= self.cfg.swa_start_epoch {
            self.state.collector.update(&params)?;
        }
        self.state.params = params;
        self.state.epoch_losses.push(loss);
        self.state.epochs_done += 1;
        Ok(loss)
    }

    pub fn finish(self) -> TrainOutcome {
        TrainOutcome {
            base: self.state.params,
            collector: self.state.collector,
            epoch_losses: self.state.epoch_losses,
        }
    }
}

fn mean_gold_loss(spec: &ModelSpec, params: &[f64], data: &[SoftLabelExample]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|ex| -run_forward(spec, params, &ex.features).probs[ex.gold].max(f64::MIN_POSITIVE).ln())
        .sum();
    total / data.len() as f64
}

/// Trains for `cfg.epochs` epochs and returns the base parameters plus the
/// populated collector.
pub fn train(
    spec: &ModelSpec,
    cfg: &TrainConfig,
    data: &[SoftLabelExample],
    rank_cap: usize,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(spec, cfg, data, rank_cap, DeviationMode::default())?;
    while !trainer.is_done() {
        trainer.run_epoch()?;
    }
    Ok(trainer.finish())
}

/// Mean-reduced gradient of a batch; each entry is `(features, target)`.
pub fn batch_grad(
    spec: &ModelSpec,
    params: &ParamSnapshot,
    batch: &[(&[f64], &PredictionDistribution)],
) -> Result<Vec<f64>> {
    spec.check_params(params.values())?;
    if batch.is_empty() {
        return Err(Error::Data("empty batch".into()));
    }
    let mut out = vec![0.0; spec.param_count()];
    let w = 1.0 / batch.len() as f64;
    for (x, t) in batch {
        spec.check_input(x)?;
        check_target(spec, t)?;
        accumulate_grad(spec, params.values(), x, t.probs(), w, &mut out);
    }
    Ok(out)
}
