use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::Awareness;

const K: usize = Awareness::COUNT;

/// Rows are the true class, columns the predicted class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; K]; K]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Awareness, Awareness)>) -> Self {
        let mut cm = Self::new();
        for (t, p) in pairs {
            cm.add(t, p);
        }
        cm
    }

    pub fn add(&mut self, truth: Awareness, predicted: Awareness) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    pub fn metrics(&self) -> Result<Metrics> {
        metrics(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class_precision: [f64; K],
    pub per_class_recall: [f64; K],
    pub per_class_f1: [f64; K],
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro-averaged precision, recall and F1 over the four
/// classes. Undefined ratios (0/0) count as 0, including for classes absent
/// from the evaluation set.
pub fn metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyEval);
    }
    let mut precision = [0.0; K];
    let mut recall = [0.0; K];
    let mut f1 = [0.0; K];
    for c in 0..K {
        let tp = cm.counts[c][c];
        let actual: u64 = cm.counts[c].iter().sum();
        let predicted: u64 = (0..K).map(|r| cm.counts[r][c]).sum();
        precision[c] = ratio(tp, predicted);
        recall[c] = ratio(tp, actual);
        let s = precision[c] + recall[c];
        f1[c] = if s > 0.0 { 2.0 * precision[c] * recall[c] / s } else { 0.0 };
    }
    let mean = |v: &[f64; K]| v.iter().sum::<f64>() / K as f64;
    Ok(Metrics {
        accuracy: ratio(cm.correct(), total),
        precision: mean(&precision),
        recall: mean(&recall),
        f1: mean(&f1),
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
    })
}
