use physimage::classifier::MeanStd;
use physimage::evaluation::{metrics, paired_ttest, ConfusionMatrix};
use physimage::signals::Awareness;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn label() -> impl Strategy<Value = usize> {
    0usize..4
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Shuffling the (truth, prediction) pairs leaves every metric unchanged.
    #[test]
    fn metrics_ignore_sample_order(pairs in prop::collection::vec((label(), label()), 1..200), seed in any::<u64>()) {
        let to = |v: &[(usize, usize)]| ConfusionMatrix::from_pairs(v.iter().map(|&(t, p)| (Awareness::ALL[t], Awareness::ALL[p])));
        let mut shuffled = pairs.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let a = metrics(&to(&pairs)).unwrap();
        let b = metrics(&to(&shuffled)).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Renaming the classes by a permutation moves rows and columns together
    /// and leaves macro metrics unchanged.
    #[test]
    fn macro_metrics_ignore_class_relabeling(
        counts in prop::array::uniform4(prop::array::uniform4(0u64..20)),
        perm in Just([0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        prop_assume!(counts.iter().flatten().sum::<u64>() > 0);
        let mut moved = [[0u64; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                moved[perm[i]][perm[j]] = counts[i][j];
            }
        }
        let a = metrics(&ConfusionMatrix::from_counts(counts)).unwrap();
        let b = metrics(&ConfusionMatrix::from_counts(moved)).unwrap();
        for (x, y) in [(a.accuracy, b.accuracy), (a.precision, b.precision), (a.recall, b.recall), (a.f1, b.f1)] {
            prop_assert!((x - y).abs() < 1e-12);
        }
        for c in 0..4 {
            prop_assert_eq!(a.per_class_recall[c], b.per_class_recall[perm[c]]);
        }
    }

    #[test]
    fn ttest_of_identical_samples(a in prop::collection::vec(-10.0f64..10.0, 2..30)) {
        let t = paired_ttest(&a, &a).unwrap();
        prop_assert_eq!(t.t, 0.0);
        prop_assert_eq!(t.p, 1.0);
    }

    #[test]
    fn metrics_stay_in_unit_interval(pairs in prop::collection::vec((label(), label()), 1..200)) {
        let cm = ConfusionMatrix::from_pairs(pairs.iter().map(|&(t, p)| (Awareness::ALL[t], Awareness::ALL[p])));
        let m = metrics(&cm).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let correct = pairs.iter().filter(|(t, p)| t == p).count();
        prop_assert!((m.accuracy - correct as f64 / pairs.len() as f64).abs() < 1e-15);
    }
}

#[test]
fn uniform_random_predictions_approach_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cm = ConfusionMatrix::from_pairs(
        (0..10_000).map(|i| (Awareness::ALL[i % 4], Awareness::ALL[rng.random_range(0..4)])),
    );
    let m = metrics(&cm).unwrap();
    assert!((m.accuracy - 0.25).abs() < 0.05, "{}", m.accuracy);
}

#[test]
fn five_run_summary() {
    let s = MeanStd::of(&[0.9, 0.92, 0.94, 0.91, 0.93]);
    assert!((s.mean - 0.92).abs() < 1e-12);
    assert!((s.std - 0.0158113883).abs() < 1e-9);
    assert_eq!(s.n, 5);
}
