use physimage::classifier::{train, Dense, MlpModel, Sample, TrainConfig, TrainedModel};
use physimage::signals::Awareness;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn hand_set_forward_pass() {
    // 2 -> 2 -> 2 -> 4
    let model = MlpModel {
        layers: vec![
            Dense { inputs: 2, outputs: 2, weights: vec![1.0, -1.0, 0.5, 0.5], bias: vec![0.0, 0.1] },
            Dense { inputs: 2, outputs: 2, weights: vec![1.0, 0.0, -1.0, 2.0], bias: vec![0.0, 0.0] },
            Dense { inputs: 2, outputs: 4, weights: vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0, -1.0, 0.0], bias: vec![0.0, 0.0, 0.0, 0.5] },
        ],
    };
    let x = [2.0, 1.0];
    // h1 = relu([2 - 1, 1 + 0.5 + 0.1]) = [1, 1.6]
    // h2 = relu([1, -1 + 3.2]) = [1, 2.2]
    // z  = [1, 2.2, 3.2, -0.5]
    let z: [f64; 4] = [1.0, 2.2, 3.2, -0.5];
    let m = z.iter().copied().fold(f64::MIN, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    let p = model.forward(&x).unwrap();
    for (a, b) in p.iter().zip(e.iter().map(|v| v / s)) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
    assert_eq!(model.predict(&x).unwrap(), 2);
}

fn two_class_blobs(n: usize, k: usize, seed: u64, shuffle_labels: bool) -> Vec<Sample<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
    (0..n)
        .map(|i| {
            let c = i % 2;
            let sign = if c == 0 { -1.0 } else { 1.0 };
            let x = dir.iter().map(|d| sign * 2.0 * d + rng.random_range(-0.3..0.3)).collect();
            let label = if shuffle_labels { rng.random_range(0..4) } else { c * 3 };
            Sample { x, label: Awareness::ALL[label] }
        })
        .collect()
}

#[test]
fn separable_data_is_learned() {
    let k = 100;
    let (tr, va, te) = (two_class_blobs(200, k, 1, false), two_class_blobs(60, k, 1, false), two_class_blobs(60, k, 1, false));
    let r = train(&tr, &va, &te, &TrainConfig::default()).unwrap();
    assert_eq!(r.test_metrics.accuracy, 1.0);
    assert!(r.best_epoch >= 1 && r.best_epoch <= 25);
    assert_eq!(r.history.len(), 25);
}

#[test]
fn shuffled_labels_stay_near_chance() {
    let k = 20;
    let tr = two_class_blobs(400, k, 2, true);
    let va = two_class_blobs(200, k, 3, true);
    let te = two_class_blobs(2000, k, 4, true);
    let mut accs = Vec::new();
    for seed in 0..3 {
        let r = train(&tr, &va, &te, &TrainConfig { seed, ..Default::default() }).unwrap();
        accs.push(r.test_metrics.accuracy);
    }
    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
    assert!((mean - 0.25).abs() <= 0.1, "{accs:?}");
}

#[test]
fn training_is_seed_deterministic() {
    let tr = two_class_blobs(100, 10, 5, false);
    let va = two_class_blobs(30, 10, 6, false);
    let cfg = TrainConfig { seed: 11, ..Default::default() };
    let a = train(&tr, &va, &va, &cfg).unwrap();
    let b = train(&tr, &va, &va, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
    let c = train(&tr, &va, &va, &TrainConfig { seed: 12, ..cfg }).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn checkpoint_file_round_trip() {
    let tr = two_class_blobs(60, 8, 7, false);
    let r = train(&tr, &tr, &tr, &TrainConfig { max_epochs: 3, ..Default::default() }).unwrap();
    let tm = TrainedModel { mlp: r.model, config: TrainConfig::default(), pca: None, history: r.history, best_epoch: r.best_epoch };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.pmlp");
    tm.save(&path).unwrap();
    assert_eq!(TrainedModel::<f64>::load(&path).unwrap(), tm);
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..5], b"PMLP1");
}
