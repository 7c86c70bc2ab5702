//! Evaluation regimes: generic leave-one-subject-out, person-specific k-fold,
//! calibration with a few samples of an unseen subject, and the subject_id
//! control study.

mod metrics;
mod regimes;
mod report;
mod sweep;

use std::collections::BTreeMap;

pub use metrics::{
    classification_metrics, compute_metrics, regression_metrics, ClassificationMetrics, Metrics,
    RegressionMetrics,
};
pub use regimes::{
    calibrate_model, evaluate_generic_loso, evaluate_person_specific,
    evaluate_person_specific_cohort, importance_control_study, rebalance_classes, ControlStudy,
    SUBJECT_ID_FEATURE,
};
pub use report::{Aggregate, EvaluationReport, UnitResult};
pub use sweep::{
    calibration_sweep, CalibrationConfig, CalibrationCurve, CurvePoint, SelectionPolicy,
    SweepReport, SweepUnit,
};

use crate::trees::TreeError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("need ≥ 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("{predictions} predictions for {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("no samples to score")]
    Empty,
    #[error("subject {0} appears in both the generic and the calibration set")]
    SubjectOverlap(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("prediction task does not match the metric")]
    TaskMismatch,
    #[error(transparent)]
    Tree(#[from] TreeError),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let m = values.iter().sum::<f64>() / n;
    let v = values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

/// Integer code per subject: its index in sorted subject order.
pub fn subject_codes(subjects: &[String]) -> BTreeMap<String, usize> {
    let mut sorted = subjects.to_vec();
    sorted.sort();
    sorted.dedup();
    sorted.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
}
