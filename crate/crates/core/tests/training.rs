use swag_core::data::{generate, SoftLabelExample, SynthConfig};
use swag_core::nn::{forward, train, Activation, ModelSpec, TrainConfig, TrainState, Trainer};
use swag_core::trajectory::DeviationMode;

fn blobs() -> Vec<SoftLabelExample> {
    // Two well-separated clusters, 2 classes, single annotator.
    generate(&SynthConfig {
        num_examples: 300,
        num_classes: 2,
        feature_dim: 2,
        cluster_separation: 12.0,
        annotators: 1,
        seed: 4,
        domain_shift: None,
    })
    .unwrap()
}

fn ambiguous() -> Vec<SoftLabelExample> {
    generate(&SynthConfig {
        num_examples: 300,
        seed: 12,
        ..SynthConfig::default()
    })
    .unwrap()
}

#[test]
fn snapshot_count_follows_schedule() {
    let spec = ModelSpec::new(vec![2, 2], Activation::Tanh).unwrap();
    for (start, expected) in [(0, 5), (3, 2), (4, 1)] {
        let cfg = TrainConfig {
            epochs: 5,
            swa_start_epoch: start,
            ..TrainConfig::default()
        };
        let out = train(&spec, &cfg, &blobs(), 20).unwrap();
        assert_eq!(out.collector.count(), expected);
        assert_eq!(out.collector.count(), cfg.snapshot_count());
        assert_eq!(out.epoch_losses.len(), 5);
    }
}

#[test]
fn separable_blobs_are_learned() {
    let spec = ModelSpec::new(vec![2, 2], Activation::Tanh).unwrap();
    let data = blobs();
    let cfg = TrainConfig {
        epochs: 10,
        swa_start_epoch: 5,
        ..TrainConfig::default()
    };
    let out = train(&spec, &cfg, &data, 20).unwrap();
    let correct = data
        .iter()
        .filter(|e| forward(&spec, &out.base, &e.features).unwrap().argmax() == e.gold)
        .count();
    assert!(correct as f64 / data.len() as f64 >= 0.99, "{correct}/{}", data.len());
}

#[test]
fn training_is_bitwise_deterministic() {
    let spec = ModelSpec::new(vec![4, 8, 3], Activation::Tanh).unwrap();
    let cfg = TrainConfig {
        epochs: 6,
        swa_start_epoch: 2,
        seed: 31,
        ..TrainConfig::default()
    };
    let a = train(&spec, &cfg, &ambiguous(), 5).unwrap();
    let b = train(&spec, &cfg, &ambiguous(), 5).unwrap();
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(a.base.values()), bits(b.base.values()));
    assert_eq!(a.collector.to_checkpoint_bytes(), b.collector.to_checkpoint_bytes());
    let other = train(&spec, &TrainConfig { seed: 32, ..cfg }, &ambiguous(), 5).unwrap();
    assert_ne!(a.base, other.base);
}

#[test]
fn epoch_loss_does_not_climb() {
    let spec = ModelSpec::new(vec![4, 8, 3], Activation::Tanh).unwrap();
    let cfg = TrainConfig {
        epochs: 25,
        swa_start_epoch: 10,
        learning_rate: 0.05,
        ..TrainConfig::default()
    };
    let out = train(&spec, &cfg, &ambiguous(), 20).unwrap();
    for (e, w) in out.epoch_losses.windows(2).enumerate() {
        assert!(w[1] <= w[0] * 1.05, "epoch {}: {} -> {}", e + 1, w[0], w[1]);
    }
    assert!(out.epoch_losses.last().unwrap() < &out.epoch_losses[0]);
}

#[test]
fn resumed_training_matches_uninterrupted() {
    let spec = ModelSpec::new(vec![4, 6, 3], Activation::Relu).unwrap();
    let cfg = TrainConfig {
        epochs: 8,
        swa_start_epoch: 2,
        seed: 5,
        ..TrainConfig::default()
    };
    let data = ambiguous();
    let whole = train(&spec, &cfg, &data, 4).unwrap();

    let mut t = Trainer::new(&spec, &cfg, &data, 4, DeviationMode::PostUpdate).unwrap();
    for _ in 0..5 {
        t.run_epoch().unwrap();
    }
    let saved = t.state().clone();
    drop(t);
    // Persist and reload the collector as a restart would.
    let collector =
        swag_core::SwagCollector::from_checkpoint_bytes(&saved.collector.to_checkpoint_bytes()).unwrap();
    let state = TrainState { collector, ..saved };
    let mut t = Trainer::resume(&spec, &cfg, &data, state).unwrap();
    while !t.is_done() {
        t.run_epoch().unwrap();
    }
    assert_eq!(t.finish(), whole);
}

#[test]
fn resume_rejects_inconsistent_state() {
    let spec = ModelSpec::new(vec![4, 3], Activation::Tanh).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        swa_start_epoch: 0,
        ..TrainConfig::default()
    };
    let data = ambiguous();
    let mut t = Trainer::new(&spec, &cfg, &data, 4, DeviationMode::PostUpdate).unwrap();
    t.run_epoch().unwrap();
    let mut state = t.state().clone();
    state.epochs_done = 3;
    assert!(Trainer::resume(&spec, &cfg, &data, state).is_err());
}
