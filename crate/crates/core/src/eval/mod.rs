//! Evaluation metrics and experiment harnesses.

pub mod harness;
pub mod metrics;

pub use harness::{
    ablation_harness, ablation_suite, derive_seed, domain_shift_suite, first_alarm_after, fit_method,
    latency_suite, score_method, training_spec, AblationRow, HarnessOptions, LatencyOptions, LatencySummary,
    Method, MethodSummary, ShiftRow,
};
pub use metrics::{
    f1_best, false_alarms_per_day, false_alarms_per_hour, latency_cdf, pr_curve, roc_curve, run_bands, Band,
    CurveKind, CurveReport, F1Report, LatencyObservation, ScoredDataset, BAND_GRID_POINTS,
};
