//! Metrics, significance testing, experiment harnesses and report output.

pub mod experiments;
mod metrics;
pub mod report;
pub mod stats;

pub use experiments::{
    combined_matrix, compare, cross_user_matrix, encoder_comparison, personalized, train_group,
    ApproachSummary, ClasswiseRow, Comparison, EncoderRanking, EncoderRow, ExperimentConfig, ExperimentKind,
    MatrixReport, RunRecord, TrainedGroup,
};
pub use metrics::{metrics, ConfusionMatrix, Metrics};
pub use stats::{paired_ttest, student_t_two_tailed, TTest};
