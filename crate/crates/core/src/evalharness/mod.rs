//! Evaluation: retrieval metrics against ground truth, latency and
//! throughput, configuration sweeps, review ledgers and effort projection.

mod matrix;
mod metrics;
mod reviews;
mod savings;
mod timing;

pub use matrix::{
    render_matrix_table, run_matrix, write_matrix_csv, ConfigKind, KbVariant, MatrixConfig, MatrixEnv,
    MatrixRow, MatrixSpec, Selection,
};
pub use metrics::{
    eval_retrieval, precision_at_k, recall_at_k, EvalScope, GroundTruth, RetrievalEvalReport, RetrievalEvalRow,
};
pub use reviews::{import_reviews, parse_reviews, Decision, ReviewLedger, ReviewRow, LIKERT_COLUMNS};
pub use savings::{project_savings, CostModel, Distribution, SavingsReport, DISTRIBUTION_TOLERANCE};
pub use timing::{measure_timing, percentile, LatencyStats, TimingReport};
