//! Training, evaluation and the cross-validation and ablation harnesses.

mod ablation;
mod config;
mod folds;
mod metrics;
mod train;

pub use ablation::{ablation_summary_csv, run_ablation_suite, AblationReport, AblationRow};
pub use config::{TrainConfig, Variant};
pub use folds::{fold_split, make_folds, resolve_folds};
pub(crate) use metrics::{csv_error, finish_csv};
pub use metrics::{argmax, compute_metrics, metrics_csv, MetricRow, Metrics, MetricsSummary};
pub use train::{
    evaluate, lr_at, run_cross_validation, train_fold, CvReport, EarlyStopping, EpochRecord, FoldResult,
};
