//! The fully connected awareness classifier, its Adam training loop with
//! best-validation-F1 checkpointing, and repeated-run aggregation.

mod adam;
mod checkpoint;
mod mlp;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{adam_step, AdamParams, AdamState};
pub use checkpoint::{TrainedModel, CHECKPOINT_MAGIC};
pub use mlp::{argmax, loss, softmax, Dense, MlpModel, MlpShape};

use crate::error::{Error, Result};
use crate::evaluation::{ConfusionMatrix, Metrics};
use crate::scalar::Scalar;
use crate::signals::Awareness;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub hidden: [usize; 2],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            weight_decay: 1e-4,
            max_epochs: 25,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            hidden: [25, 10],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::InvalidSpec("lr must be positive".into()));
        }
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidSpec("max_epochs and batch_size must be at least 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamParams {
        AdamParams {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
        }
    }
}

/// A feature vector and its label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<T> {
    pub x: Vec<T>,
    pub label: Awareness,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult<T> {
    pub seed: u64,
    pub history: Vec<EpochStats>,
    /// 1-based epoch of the kept checkpoint.
    pub best_epoch: usize,
    pub model: MlpModel<T>,
    pub val_metrics: Metrics,
    pub test_metrics: Metrics,
    pub test_confusion: ConfusionMatrix,
}

/// Confusion matrix of `model` on `samples`.
pub fn evaluate<T: Scalar>(model: &MlpModel<T>, samples: &[Sample<T>]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::new();
    for s in samples {
        let p = model.predict(&s.x)?;
        cm.add(s.label, Awareness::ALL[p]);
    }
    Ok(cm)
}

/// A trained model with its per-epoch history.
#[derive(Clone, Debug, PartialEq)]
pub struct FitResult<T> {
    pub seed: u64,
    pub history: Vec<EpochStats>,
    /// 1-based epoch of the kept checkpoint.
    pub best_epoch: usize,
    pub model: MlpModel<T>,
    pub val_metrics: Metrics,
}

/// Trains one model.
///
/// Each epoch shuffles the training set, runs mini-batch Adam and scores the
/// validation set by macro-F1. The epoch with the highest validation F1
/// (earliest on ties) is kept.
pub fn fit<T: Scalar>(train_set: &[Sample<T>], val_set: &[Sample<T>], cfg: &TrainConfig) -> Result<FitResult<T>> {
    cfg.validate()?;
    for (name, set) in [("train", train_set), ("val", val_set)] {
        if set.is_empty() {
            return Err(Error::EmptySplit(name.into()));
        }
    }
    let dim = train_set[0].x.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shape = MlpShape { input: dim, hidden: cfg.hidden, classes: Awareness::COUNT };
    let mut model = MlpModel::<T>::he_init(shape, &mut rng);
    let mut params = model.params();
    let mut state = AdamState::new(params.len());
    let adam = cfg.adam();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(usize, f64, MlpModel<T>, Metrics)> = None;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[T], usize)> =
                chunk.iter().map(|&i| (train_set[i].x.as_slice(), train_set[i].label.index())).collect();
            let (loss, grads) = model.backward(&batch);
            loss_sum += loss.as_f64() * chunk.len() as f64;
            adam_step(&mut params, &grads, &mut state, &adam);
            model.set_params(&params);
        }
        if !model.is_finite() {
            return Err(Error::NumericError("model parameters"));
        }
        let val = evaluate(&model, val_set)?.metrics()?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_f1: val.f1,
            val_accuracy: val.accuracy,
        });
        if best.as_ref().is_none_or(|b| val.f1 > b.1) {
            best = Some((epoch, val.f1, model.clone(), val));
        }
    }
    let (best_epoch, _, model, val_metrics) = best.expect("max_epochs >= 1");
    Ok(FitResult { seed: cfg.seed, history, best_epoch, model, val_metrics })
}

/// [`fit`] followed by scoring the kept checkpoint on the test set.
pub fn train<T: Scalar>(
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    test_set: &[Sample<T>],
    cfg: &TrainConfig,
) -> Result<RunResult<T>> {
    for (name, set) in [("train", train_set), ("val", val_set), ("test", test_set)] {
        if set.is_empty() {
            return Err(Error::EmptySplit(name.into()));
        }
    }
    let f = fit(train_set, val_set, cfg)?;
    let test_confusion = evaluate(&f.model, test_set)?;
    Ok(RunResult {
        seed: f.seed,
        history: f.history,
        best_epoch: f.best_epoch,
        test_metrics: test_confusion.metrics()?,
        test_confusion,
        val_metrics: f.val_metrics,
        model: f.model,
    })
}

/// Mean and sample standard deviation of repeated measurements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// A single value reports `std = 0`; see [`MeanStd::single_run`].
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return MeanStd { mean: f64::NAN, std: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        MeanStd { mean, std, n }
    }

    /// True when the deviation is the single-run convention, not an estimate.
    pub fn single_run(&self) -> bool {
        self.n == 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RepeatSummary {
    pub runs: Vec<Metrics>,
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
    pub per_class_recall: [MeanStd; Awareness::COUNT],
}

impl RepeatSummary {
    pub fn from_runs(runs: Vec<Metrics>) -> Self {
        let col = |f: &dyn Fn(&Metrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        let per_class_recall = std::array::from_fn(|c| col(&|m: &Metrics| m.per_class_recall[c]));
        RepeatSummary {
            accuracy: col(&|m| m.accuracy),
            precision: col(&|m| m.precision),
            recall: col(&|m| m.recall),
            f1: col(&|m| m.f1),
            per_class_recall,
            runs,
        }
    }
}

/// Runs `run(seed)` for seeds `base_seed .. base_seed + n_runs` in parallel and
/// summarizes the metrics in seed order.
pub fn repeat_with<F>(n_runs: usize, base_seed: u64, run: F) -> Result<RepeatSummary>
where
    F: Fn(u64) -> Result<Metrics> + Sync,
{
    if n_runs == 0 {
        return Err(Error::InvalidSpec("n_runs must be at least 1".into()));
    }
    let runs = (0..n_runs as u64)
        .into_par_iter()
        .map(|r| run(base_seed + r))
        .collect::<Result<Vec<_>>>()?;
    Ok(RepeatSummary::from_runs(runs))
}

/// Five-run (or `n_runs`) training with consecutive seeds.
pub fn repeat_runs<T: Scalar>(
    train_set: &[Sample<T>],
    val_set: &[Sample<T>],
    test_set: &[Sample<T>],
    cfg: &TrainConfig,
    n_runs: usize,
) -> Result<RepeatSummary> {
    repeat_with(n_runs, cfg.seed, |seed| {
        let cfg = TrainConfig { seed, ..*cfg };
        train(train_set, val_set, test_set, &cfg).map(|r| r.test_metrics)
    })
}
