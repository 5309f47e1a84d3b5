use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swag_core::data::SoftLabelExample;
use swag_core::eval::{cross_entropy, entropy, evaluate, summarize, EvalReport, Method, RunIds};
use swag_core::PredictionDistribution;

fn random_dist(rng: &mut ChaCha8Rng, c: usize, sparse: bool) -> PredictionDistribution {
    let mut raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
    if sparse {
        raw[rng.random_range(0..c)] = 0.0;
    }
    if raw.iter().sum::<f64>() == 0.0 {
        raw[0] = 1.0;
    }
    let total: f64 = raw.iter().sum();
    PredictionDistribution::new(raw.into_iter().map(|v| v / total).collect()).unwrap()
}

#[test]
fn uniform_prediction_costs_ln_three() {
    let uniform = PredictionDistribution::uniform(3).unwrap();
    for votes in [[5, 0, 0], [2, 2, 1], [0, 3, 2], [1, 1, 1]] {
        let total: u32 = votes.iter().sum();
        let annot =
            PredictionDistribution::new(votes.iter().map(|&v| f64::from(v) / f64::from(total)).collect())
                .unwrap();
        assert!((cross_entropy(&uniform, &annot) - 3f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn gibbs_inequality_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    for i in 0..10_000 {
        let c = rng.random_range(2..6);
        let q = random_dist(&mut rng, c, i % 3 == 0);
        let p = random_dist(&mut rng, c, i % 5 == 0);
        assert!(cross_entropy(&q, &p) >= entropy(&p) - 1e-12, "pair {i}");
    }
}

#[test]
fn cross_entropy_equals_entropy_at_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let p = random_dist(&mut rng, 3, false);
        assert!((cross_entropy(&p, &p) - entropy(&p)).abs() < 1e-12);
    }
}

#[test]
fn zero_support_is_floored_not_infinite() {
    let pred = PredictionDistribution::one_hot(3, 0).unwrap();
    let annot = PredictionDistribution::new(vec![0.0, 1.0, 0.0]).unwrap();
    let ce = cross_entropy(&pred, &annot);
    assert!(ce.is_finite());
    assert!((ce + 1e-12f64.ln()).abs() < 1e-9);
    // zero annotation mass on the missed class contributes nothing
    let annot = PredictionDistribution::one_hot(3, 0).unwrap();
    assert_eq!(cross_entropy(&pred, &annot), 0.0);
}

fn toy_data() -> Vec<SoftLabelExample> {
    vec![
        SoftLabelExample::new("a", vec![], vec![5, 0, 0]).unwrap(),
        SoftLabelExample::new("b", vec![], vec![1, 3, 1]).unwrap(),
        SoftLabelExample::new("c", vec![], vec![0, 2, 3]).unwrap(),
        SoftLabelExample::new("d", vec![], vec![2, 2, 1]).unwrap(),
    ]
}

fn ids(seed: u64) -> RunIds {
    RunIds {
        train_set_id: "synth/train".into(),
        test_set_id: "synth/test".into(),
        seed,
    }
}

#[test]
fn report_headers_match_hand_computation() {
    let preds = vec![
        PredictionDistribution::new(vec![0.8, 0.1, 0.1]).unwrap(),
        PredictionDistribution::new(vec![0.2, 0.5, 0.3]).unwrap(),
        PredictionDistribution::new(vec![0.1, 0.6, 0.3]).unwrap(),
        PredictionDistribution::new(vec![0.4, 0.4, 0.2]).unwrap(),
    ];
    let report = evaluate(&preds, &toy_data(), Method::Swa, &ids(0)).unwrap();
    assert!(report.is_consistent());
    // gold: a→0 ✓, b→1 ✓, c→2 ✗ (predicts 1), d→0 (tie, low index) ✓
    assert_eq!(report.accuracy, 0.75);
    let hand = [
        -(0.8f64.ln()),
        -(0.2 * 0.2f64.ln() + 0.6 * 0.5f64.ln() + 0.2 * 0.3f64.ln()),
        -(0.4 * 0.6f64.ln() + 0.6 * 0.3f64.ln()),
        -(0.4 * 0.4f64.ln() + 0.4 * 0.4f64.ln() + 0.2 * 0.2f64.ln()),
    ];
    let mean = hand.iter().sum::<f64>() / 4.0;
    assert!((report.mean_cross_entropy - mean).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    report.save(&path).unwrap();
    assert_eq!(EvalReport::load(&path).unwrap(), report);
}

#[test]
fn summary_statistics_use_sample_sd_and_deltas() {
    let data = toy_data();
    let correct: Vec<_> = data
        .iter()
        .map(|e| PredictionDistribution::one_hot(3, e.gold).unwrap())
        .collect();
    let uniform = vec![PredictionDistribution::uniform(3).unwrap(); 4];
    let mut reports = Vec::new();
    for seed in 0..3u64 {
        reports.push(evaluate(&uniform, &data, Method::Base, &ids(seed)).unwrap());
        let preds = if seed == 0 { &uniform } else { &correct };
        reports.push(evaluate(preds, &data, Method::Swa, &ids(seed)).unwrap());
        reports.push(evaluate(&correct, &data, Method::Swag, &ids(seed)).unwrap());
    }
    let s = summarize(&reports).unwrap();
    assert_eq!(s.seeds, vec![0, 1, 2]);
    assert!(!s.cross_dataset);
    let base = s.method(Method::Base).unwrap();
    let swa = s.method(Method::Swa).unwrap();
    // Uniform picks class 0 everywhere: gold a and d.
    assert_eq!(base.mean_accuracy, 0.5);
    assert_eq!(base.sd_accuracy, 0.0);
    let accs = [0.5, 1.0, 1.0];
    let m = accs.iter().sum::<f64>() / 3.0;
    let sd = (accs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((swa.mean_accuracy - m).abs() < 1e-15);
    assert!((swa.sd_accuracy - sd).abs() < 1e-15);
    assert!((swa.delta_accuracy - (m - 0.5)).abs() < 1e-15);
    assert!(
        (s.method(Method::Swag).unwrap().delta_cross_entropy
            - (s.method(Method::Swag).unwrap().mean_cross_entropy - base.mean_cross_entropy))
            .abs()
            < 1e-15
    );
    // missing base is an error
    let no_base: Vec<_> = reports.iter().filter(|r| r.method != Method::Base).cloned().collect();
    assert!(summarize(&no_base).is_err());
}
