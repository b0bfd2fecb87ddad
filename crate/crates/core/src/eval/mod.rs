//! Classification metrics, length strata, confusion matrices, timing and
//! report rendering.

mod bench;
mod metrics;
mod report;

pub use bench::{bench_inference, BenchResult, FixedStepTimer, Timer, WallTimer};
pub use metrics::{
    compute_metrics, confusion_matrix, stratified_f1, ClassMetrics, ConfusionMatrix, LengthStratum, MetricsReport,
    StratumF1,
};
pub use report::{metrics_table, metrics_csv, strata_csv, strata_table, MethodReport};
