//! Experiment harnesses: per-user and cross-user matrices, the combined
//! leave-one-out matrix, personalized-vs-combined comparison and the encoder
//! ranking. Every harness returns its per-run records; the summaries are
//! rebuilt from those records, so a persisted `runs.jsonl` reproduces them.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ConfusionMatrix, Metrics};
use super::stats::{paired_ttest, TTest};
use crate::classifier::{evaluate, fit, FitResult, MeanStd, RepeatSummary, Sample, TrainConfig, TrainedModel};
use crate::dataset::Split;
use crate::embedding::{pca_fit, FeatureExtractor, FeatureRecord, PcaModel, DEFAULT_PCA_K};
use crate::encoders::EncoderSpec;
use crate::error::{Error, Result};
use crate::pipeline::{featurize, PipelineConfig, UserFeatures};
use crate::scalar::Scalar;
use crate::signals::{Awareness, MultimodalRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Personalized,
    CrossUser,
    Combined,
    EncoderComparison,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Personalized => "personalized",
            ExperimentKind::CrossUser => "cross_user",
            ExperimentKind::Combined => "combined",
            ExperimentKind::EncoderComparison => "encoder_comparison",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// `train.seed` is the seed of run 0; run `r` uses `seed + r`.
    pub train: TrainConfig,
    pub pca_k: usize,
    pub n_runs: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig { train: TrainConfig::default(), pca_k: DEFAULT_PCA_K, n_runs: 5 }
    }
}

/// Metrics of one trained run on one evaluation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: ExperimentKind,
    /// Column label: the trained user, the `+`-joined training group, or
    /// the encoder.
    pub model: String,
    pub trained_on: Vec<String>,
    pub tested_on: String,
    /// Split the metrics were computed on.
    pub split: Split,
    pub run: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub metrics: Metrics,
    pub confusion: ConfusionMatrix,
}

fn project<T: Scalar>(pca: &PcaModel<T>, recs: &[&FeatureRecord<T>]) -> Result<Vec<Sample<T>>> {
    recs.par_iter()
        .map(|r| Ok(Sample { x: pca.transform(&r.concat)?, label: r.label }))
        .collect()
}

/// PCA fit on the training records, then `n_runs` seeded trainings.
pub struct TrainedGroup<T> {
    pub pca: PcaModel<T>,
    pub fits: Vec<FitResult<T>>,
}

impl<T: Scalar> TrainedGroup<T> {
    /// Checkpoint of run `r`.
    pub fn checkpoint(&self, r: usize, cfg: &ExperimentConfig) -> TrainedModel<T> {
        let f = &self.fits[r];
        TrainedModel {
            mlp: f.model.clone(),
            config: TrainConfig { seed: f.seed, ..cfg.train },
            pca: Some(self.pca.clone()),
            history: f.history.clone(),
            best_epoch: f.best_epoch,
        }
    }
}

pub fn train_group<T: Scalar>(
    train: &[&FeatureRecord<T>],
    val: &[&FeatureRecord<T>],
    cfg: &ExperimentConfig,
) -> Result<TrainedGroup<T>> {
    if cfg.n_runs == 0 {
        return Err(Error::InvalidSpec("n_runs must be at least 1".into()));
    }
    let data: Vec<&[T]> = train.iter().map(|r| r.concat.as_slice()).collect();
    let pca = pca_fit(&data, cfg.pca_k)?;
    let train_s = project(&pca, train)?;
    let val_s = project(&pca, val)?;
    let fits = (0..cfg.n_runs as u64)
        .into_par_iter()
        .map(|r| fit(&train_s, &val_s, &TrainConfig { seed: cfg.train.seed + r, ..cfg.train }))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedGroup { pca, fits })
}

fn check_splits<T>(users: &[UserFeatures<T>]) -> Result<()> {
    for u in users {
        for s in Split::ALL {
            if !u.records.iter().any(|r| r.split == s) {
                return Err(Error::EmptySplit(format!("{} ({s})", u.user_id)));
            }
        }
    }
    Ok(())
}

/// Trains one group per entry of `groups` and evaluates every run on every
/// user's test split.
fn matrix<T: Scalar>(
    kind: ExperimentKind,
    users: &[UserFeatures<T>],
    groups: &[Vec<usize>],
    cfg: &ExperimentConfig,
) -> Result<Vec<RunRecord>> {
    check_splits(users)?;
    let mut records = Vec::new();
    for members in groups {
        let pick = |s: Split| -> Vec<&FeatureRecord<T>> {
            members.iter().flat_map(|&m| users[m].split(s)).collect()
        };
        let group = train_group(&pick(Split::Train), &pick(Split::Val), cfg)?;
        let trained_on: Vec<String> = members.iter().map(|&m| users[m].user_id.clone()).collect();
        let model = trained_on.join("+");
        let tests = users
            .iter()
            .map(|u| project(&group.pca, &u.split(Split::Test)))
            .collect::<Result<Vec<_>>>()?;
        for (run, f) in group.fits.iter().enumerate() {
            for (u, test) in users.iter().zip(&tests) {
                let confusion = evaluate(&f.model, test)?;
                records.push(RunRecord {
                    experiment: kind,
                    model: model.clone(),
                    trained_on: trained_on.clone(),
                    tested_on: u.user_id.clone(),
                    split: Split::Test,
                    run,
                    seed: f.seed,
                    best_epoch: f.best_epoch,
                    metrics: confusion.metrics()?,
                    confusion,
                });
            }
        }
    }
    Ok(records)
}

/// Personalized models: one per user, each evaluated on every user's test
/// split. Cells are indexed `[tested][trained]`.
pub fn cross_user_matrix<T: Scalar>(users: &[UserFeatures<T>], cfg: &ExperimentConfig) -> Result<MatrixReport> {
    if users.is_empty() {
        return Err(Error::InvalidSpec("cross-user matrix needs at least one user".into()));
    }
    let groups: Vec<Vec<usize>> = (0..users.len()).map(|u| vec![u]).collect();
    MatrixReport::from_runs(ExperimentKind::CrossUser, matrix(ExperimentKind::CrossUser, users, &groups, cfg)?)
}

/// Leave-one-user-out models. Column `h` is trained on every user except
/// `h`, so the diagonal is unseen-user performance.
pub fn combined_matrix<T: Scalar>(users: &[UserFeatures<T>], cfg: &ExperimentConfig) -> Result<MatrixReport> {
    if users.len() < 2 {
        return Err(Error::InvalidSpec("combined matrix needs at least two users".into()));
    }
    let groups: Vec<Vec<usize>> =
        (0..users.len()).map(|h| (0..users.len()).filter(|&u| u != h).collect()).collect();
    MatrixReport::from_runs(ExperimentKind::Combined, matrix(ExperimentKind::Combined, users, &groups, cfg)?)
}

/// One user's personalized runs, plus the trained group for checkpointing.
pub fn personalized<T: Scalar>(
    user: &UserFeatures<T>,
    cfg: &ExperimentConfig,
) -> Result<(MatrixReport, TrainedGroup<T>)> {
    check_splits(std::slice::from_ref(user))?;
    let group = train_group(&user.split(Split::Train), &user.split(Split::Val), cfg)?;
    let test = project(&group.pca, &user.split(Split::Test))?;
    let mut records = Vec::with_capacity(group.fits.len());
    for (run, f) in group.fits.iter().enumerate() {
        let confusion = evaluate(&f.model, &test)?;
        records.push(RunRecord {
            experiment: ExperimentKind::Personalized,
            model: user.user_id.clone(),
            trained_on: vec![user.user_id.clone()],
            tested_on: user.user_id.clone(),
            split: Split::Test,
            run,
            seed: f.seed,
            best_epoch: f.best_epoch,
            metrics: confusion.metrics()?,
            confusion,
        });
    }
    Ok((MatrixReport::from_runs(ExperimentKind::Personalized, records)?, group))
}

/// Mean ± std cells of a tested-by-model matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct MatrixReport {
    pub kind: ExperimentKind,
    /// Row labels (tested users).
    pub tested: Vec<String>,
    /// Column labels (trained models).
    pub models: Vec<String>,
    /// `cells[tested][model]`; absent when no run covers the pair.
    pub cells: Vec<Vec<Option<RepeatSummary>>>,
    pub runs: Vec<RunRecord>,
}

fn first_seen<'a>(items: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.contains(s) {
            out.push(s.clone());
        }
    }
    out
}

impl MatrixReport {
    /// Groups per-run records into cells; row and column order follow first
    /// appearance, and each cell lists its runs in run order.
    pub fn from_runs(kind: ExperimentKind, mut runs: Vec<RunRecord>) -> Result<Self> {
        runs.retain(|r| r.experiment == kind);
        if runs.is_empty() {
            return Err(Error::EmptyEval);
        }
        let tested = first_seen(runs.iter().map(|r| &r.tested_on));
        let models = first_seen(runs.iter().map(|r| &r.model));
        let cells = tested
            .iter()
            .map(|t| {
                models
                    .iter()
                    .map(|m| {
                        let mut rs: Vec<&RunRecord> =
                            runs.iter().filter(|r| &r.tested_on == t && &r.model == m).collect();
                        rs.sort_by_key(|r| r.run);
                        (!rs.is_empty()).then(|| RepeatSummary::from_runs(rs.iter().map(|r| r.metrics).collect()))
                    })
                    .collect()
            })
            .collect();
        Ok(MatrixReport { kind, tested, models, cells, runs })
    }

    /// Cell where the tested user is the trained user (cross-user) or the
    /// held-out user (combined).
    pub fn diagonal(&self, i: usize) -> Option<&RepeatSummary> {
        let user = self.tested.get(i)?;
        let col = match self.kind {
            ExperimentKind::Combined => self.runs.iter().find(|r| &r.tested_on == user && !r.trained_on.contains(user)),
            _ => self.runs.iter().find(|r| &r.tested_on == user && r.trained_on == [user.clone()]),
        }
        .and_then(|r| self.models.iter().position(|m| m == &r.model))?;
        self.cells[i][col].as_ref()
    }

    /// Whether column `j` is the diagonal column of row `i`.
    pub fn is_diagonal(&self, i: usize, j: usize) -> bool {
        let user = &self.tested[i];
        self.runs.iter().any(|r| {
            &r.tested_on == user
                && r.model == self.models[j]
                && match self.kind {
                    ExperimentKind::Combined => !r.trained_on.contains(user),
                    _ => r.trained_on == [user.clone()],
                }
        })
    }

    /// Mean accuracy over the off-diagonal cells.
    pub fn mean_off_diagonal_accuracy(&self) -> Option<f64> {
        let mut v = Vec::new();
        for i in 0..self.tested.len() {
            for j in 0..self.models.len() {
                if let (false, Some(c)) = (self.is_diagonal(i, j), &self.cells[i][j]) {
                    v.push(c.accuracy.mean);
                }
            }
        }
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    /// Per-run diagonal metrics of user `i`, in run order.
    pub fn diagonal_runs(&self, i: usize) -> Vec<Metrics> {
        self.diagonal(i).map(|c| c.runs.clone()).unwrap_or_default()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApproachSummary {
    pub accuracy: MeanStd,
    pub precision: MeanStd,
    pub recall: MeanStd,
    pub f1: MeanStd,
}

impl ApproachSummary {
    fn of(runs: &[Metrics]) -> Self {
        let col = |f: fn(&Metrics) -> f64| MeanStd::of(&runs.iter().map(f).collect::<Vec<_>>());
        ApproachSummary {
            accuracy: col(|m| m.accuracy),
            precision: col(|m| m.precision),
            recall: col(|m| m.recall),
            f1: col(|m| m.f1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClasswiseRow {
    pub user: String,
    pub approach: String,
    /// Indexed by `Awareness::index()`.
    pub recall: [MeanStd; Awareness::COUNT],
}

/// Personalized (cross-user diagonal) against combined (leave-one-out
/// diagonal), paired by `(user, run)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub users: Vec<String>,
    pub personalized: ApproachSummary,
    pub combined: ApproachSummary,
    /// Accuracy, precision, recall and F1, in that order.
    pub ttests: [TTest; 4],
    pub classwise: Vec<ClasswiseRow>,
}

pub const COMPARISON_METRICS: [&str; 4] = ["accuracy", "precision", "recall", "f1"];

pub fn compare(personalized: &MatrixReport, combined: &MatrixReport) -> Result<Comparison> {
    let mut pa = Vec::new();
    let mut ca = Vec::new();
    let mut classwise = Vec::new();
    let mut users = Vec::new();
    for (i, user) in personalized.tested.iter().enumerate() {
        let Some(j) = combined.tested.iter().position(|u| u == user) else { continue };
        let p = personalized.diagonal_runs(i);
        let c = combined.diagonal_runs(j);
        if p.is_empty() || c.is_empty() {
            continue;
        }
        if p.len() != c.len() {
            return Err(Error::InsufficientPairs { a: p.len(), b: c.len() });
        }
        for (approach, runs) in [("personalized", &p), ("combined", &c)] {
            classwise.push(ClasswiseRow {
                user: user.clone(),
                approach: approach.into(),
                recall: std::array::from_fn(|k| {
                    MeanStd::of(&runs.iter().map(|m| m.per_class_recall[k]).collect::<Vec<_>>())
                }),
            });
        }
        users.push(user.clone());
        pa.extend(p);
        ca.extend(c);
    }
    let getters: [fn(&Metrics) -> f64; 4] = [|m| m.accuracy, |m| m.precision, |m| m.recall, |m| m.f1];
    let mut ttests = Vec::with_capacity(4);
    for g in getters {
        let a: Vec<f64> = pa.iter().map(g).collect();
        let b: Vec<f64> = ca.iter().map(g).collect();
        ttests.push(paired_ttest(&a, &b)?);
    }
    Ok(Comparison {
        users,
        personalized: ApproachSummary::of(&pa),
        combined: ApproachSummary::of(&ca),
        ttests: ttests.try_into().expect("four metrics"),
        classwise,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderRow {
    pub label: String,
    pub val_accuracy: MeanStd,
    pub val_f1: MeanStd,
}

/// Encoders ranked by mean validation accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderRanking {
    pub user_id: String,
    pub rows: Vec<EncoderRow>,
    pub runs: Vec<RunRecord>,
}

impl EncoderRanking {
    /// Rows sorted by descending mean validation accuracy; ties keep the
    /// order of first appearance.
    pub fn from_runs(mut runs: Vec<RunRecord>) -> Result<Self> {
        runs.retain(|r| r.experiment == ExperimentKind::EncoderComparison);
        let user_id = runs.first().ok_or(Error::EmptyEval)?.tested_on.clone();
        let mut rows: Vec<EncoderRow> = first_seen(runs.iter().map(|r| &r.model))
            .into_iter()
            .map(|label| {
                let mut rs: Vec<&RunRecord> = runs.iter().filter(|r| r.model == label).collect();
                rs.sort_by_key(|r| r.run);
                EncoderRow {
                    val_accuracy: MeanStd::of(&rs.iter().map(|r| r.metrics.accuracy).collect::<Vec<_>>()),
                    val_f1: MeanStd::of(&rs.iter().map(|r| r.metrics.f1).collect::<Vec<_>>()),
                    label,
                }
            })
            .collect();
        rows.sort_by(|a, b| b.val_accuracy.mean.total_cmp(&a.val_accuracy.mean));
        Ok(EncoderRanking { user_id, rows, runs })
    }

    pub fn rank_of(&self, label: &str) -> Option<usize> {
        self.rows.iter().position(|r| r.label == label)
    }
}

/// Builds features of one session with each encoder, trains `n_runs`
/// models per encoder and ranks encoders by validation accuracy. Windows and
/// splits are identical across encoders.
pub fn encoder_comparison<T: Scalar>(
    rec: &MultimodalRecord,
    encoders: &[EncoderSpec],
    pipeline: &PipelineConfig,
    ex: &dyn FeatureExtractor<T>,
    cfg: &ExperimentConfig,
) -> Result<EncoderRanking> {
    let mut runs = Vec::new();
    for enc in encoders {
        let feats = featurize(rec, &PipelineConfig { encoder: *enc, ..*pipeline }, ex)?;
        check_splits(std::slice::from_ref(&feats))?;
        let group = train_group(&feats.split(Split::Train), &feats.split(Split::Val), cfg)?;
        let val_set = project(&group.pca, &feats.split(Split::Val))?;
        for (run, f) in group.fits.iter().enumerate() {
            let confusion = evaluate(&f.model, &val_set)?;
            runs.push(RunRecord {
                experiment: ExperimentKind::EncoderComparison,
                model: enc.label(),
                trained_on: vec![feats.user_id.clone()],
                tested_on: feats.user_id.clone(),
                split: Split::Val,
                run,
                seed: f.seed,
                best_epoch: f.best_epoch,
                metrics: confusion.metrics()?,
                confusion,
            });
        }
    }
    EncoderRanking::from_runs(runs)
}
