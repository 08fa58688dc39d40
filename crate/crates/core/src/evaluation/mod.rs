//! Metrics, per-fold evaluation, cross-validation and layer sweeps.

mod crossval;
mod metrics;
mod sweep;

pub use crossval::{
    crossval, crossval_models, evaluate_fold, metric_table_csv, summary_csv, CvSummary,
    FoldEvaluation, FoldResult, MeanStd, Prediction, ReportMetadata,
};
pub use metrics::{compute_metrics, ClassMetrics, ConfusionMatrix, MetricsReport};
pub use sweep::{layer_sweep, LayerResult, SweepReport};
