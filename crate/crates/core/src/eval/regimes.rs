use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{compute_metrics, subject_codes, Aggregate, EvalError, EvaluationReport, Metrics, Result, UnitResult};
use crate::hrv::{FeatureMatrix, FeatureRow};
use crate::seed::{derive_seed, derive_seed_str, rng};
use crate::trees::{
    feature_importance, fit_ensemble, run_rfe, Dataset, EnsembleModel, EnsembleSpec, ImportanceReport,
    Prediction, RfeResult, Target, Task,
};

pub const SUBJECT_ID_FEATURE: &str = "subject_id";

/// Seeded undersampling of every class to the minority count. Kept rows stay
/// in their original order; single-class input comes back unchanged.
pub fn rebalance_classes(matrix: &FeatureMatrix, seed: u64) -> FeatureMatrix {
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, r) in matrix.rows.iter().enumerate() {
        by_class.entry(r.condition.code()).or_default().push(i);
    }
    if by_class.len() < 2 {
        log::warn!("rebalance: single class, left unchanged");
        return matrix.clone();
    }
    let minority = by_class.values().map(Vec::len).min().unwrap_or(0);
    let mut keep = Vec::with_capacity(minority * by_class.len());
    for (code, mut idx) in by_class {
        if idx.len() > minority {
            idx.shuffle(&mut rng(derive_seed(seed, u64::from(code))));
            idx.truncate(minority);
        }
        keep.extend(idx);
    }
    keep.sort_unstable();
    FeatureMatrix::from_rows(
        matrix.feature_names.clone(),
        keep.into_iter().map(|i| matrix.rows[i].clone()).collect(),
    )
}

fn training_rows(train: FeatureMatrix, task: Task, seed: u64) -> FeatureMatrix {
    match task {
        Task::Classify => rebalance_classes(&train, seed),
        Task::Regress => train,
    }
}

pub(crate) struct Scored {
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
    pub truths: Target,
}

pub(crate) fn score(model: &EnsembleModel, test: &FeatureMatrix, task: Task) -> Result<Scored> {
    let data = Dataset::from_matrix(test, task);
    let predictions = model.predict_batch(&data)?;
    let metrics = compute_metrics(&predictions, &data.target)?;
    Ok(Scored {
        metrics,
        predictions,
        truths: data.target,
    })
}

pub(crate) fn pooled(parts: &[(&[Prediction], &Target)]) -> Result<Option<Metrics>> {
    if parts.is_empty() {
        return Ok(None);
    }
    let mut preds = Vec::new();
    let mut target = match parts[0].1 {
        Target::Classes(_) => Target::Classes(Vec::new()),
        Target::Values(_) => Target::Values(Vec::new()),
    };
    for (p, t) in parts {
        preds.extend_from_slice(p);
        match (&mut target, t) {
            (Target::Classes(a), Target::Classes(b)) => a.extend_from_slice(b),
            (Target::Values(a), Target::Values(b)) => a.extend_from_slice(b),
            _ => return Err(EvalError::TaskMismatch),
        }
    }
    compute_metrics(&preds, &target).map(Some)
}

fn ids(m: &FeatureMatrix) -> Vec<u64> {
    m.rows.iter().map(|r| r.row_id).collect()
}

/// Train on every other subject, test on the held-out one.
pub fn evaluate_generic_loso(matrix: &FeatureMatrix, spec: &EnsembleSpec) -> Result<EvaluationReport> {
    let start = Instant::now();
    let subjects = matrix.subjects();
    if subjects.len() < 2 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    let rounds: Vec<(UnitResult, Scored)> = subjects
        .par_iter()
        .map(|s| {
            let unit_seed = derive_seed_str(spec.seed, s);
            let test = matrix.subject(s);
            let train = training_rows(matrix.filter(|r| r.subject_id != *s), spec.task, derive_seed(unit_seed, 1));
            let model = fit_ensemble(&Dataset::from_matrix(&train, spec.task), &spec.with_seed(unit_seed))?;
            let scored = score(&model, &test, spec.task)?;
            Ok((
                UnitResult {
                    unit: s.clone(),
                    n_train: train.len(),
                    n_test: test.len(),
                    metrics: scored.metrics.clone(),
                    train_rows: ids(&train),
                    test_rows: ids(&test),
                },
                scored,
            ))
        })
        .collect::<Result<_>>()?;
    finish("generic_loso", spec, rounds, Vec::new(), start)
}

fn finish(
    regime: &str,
    spec: &EnsembleSpec,
    rounds: Vec<(UnitResult, Scored)>,
    warnings: Vec<String>,
    start: Instant,
) -> Result<EvaluationReport> {
    let parts: Vec<(&[Prediction], &Target)> =
        rounds.iter().map(|(_, s)| (s.predictions.as_slice(), &s.truths)).collect();
    let pooled = pooled(&parts)?;
    let units: Vec<UnitResult> = rounds.into_iter().map(|(u, _)| u).collect();
    Ok(EvaluationReport {
        regime: regime.to_string(),
        task: spec.task,
        spec: *spec,
        seed: spec.seed,
        aggregate: Aggregate::over(&units),
        units,
        pooled,
        warnings,
        wall_time: start.elapsed(),
    })
}

/// Fold index per row. Classification deals each class's rows round-robin
/// over the folds (one running counter, so fold sizes differ by at most
/// one); a class with fewer members than folds falls back to a seeded
/// shuffle. Regression uses contiguous blocks.
pub(crate) fn assign_folds(rows: &[FeatureRow], task: Task, folds: usize, seed: u64) -> (Vec<usize>, Option<String>) {
    let n = rows.len();
    let mut fold = vec![0usize; n];
    match task {
        Task::Classify => {
            let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, r) in rows.iter().enumerate() {
                by_class.entry(r.condition.code()).or_default().push(i);
            }
            if let Some((code, members)) = by_class.iter().find(|(_, v)| v.len() < folds) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut rng(seed));
                for (pos, &i) in perm.iter().enumerate() {
                    fold[i] = pos % folds;
                }
                let flag = format!(
                    "class {code} has {} rows for {folds} folds; stratification replaced by shuffled folds",
                    members.len()
                );
                return (fold, Some(flag));
            }
            let mut c = 0;
            for members in by_class.values() {
                for &i in members {
                    fold[i] = c % folds;
                    c += 1;
                }
            }
        }
        Task::Regress => {
            let base = n / folds;
            let extra = n % folds;
            let mut i = 0;
            for f in 0..folds {
                let size = base + usize::from(f < extra);
                for slot in &mut fold[i..i + size] {
                    *slot = f;
                }
                i += size;
            }
        }
    }
    (fold, None)
}

/// k-fold cross-validation within one subject's rows.
pub fn evaluate_person_specific(
    subject_rows: &FeatureMatrix,
    spec: &EnsembleSpec,
    folds: usize,
) -> Result<EvaluationReport> {
    let start = Instant::now();
    let (rounds, warnings) = person_folds(subject_rows, spec, folds)?;
    finish("person_specific", spec, rounds, warnings, start)
}

fn person_folds(
    m: &FeatureMatrix,
    spec: &EnsembleSpec,
    folds: usize,
) -> Result<(Vec<(UnitResult, Scored)>, Vec<String>)> {
    if folds < 2 {
        return Err(EvalError::InvalidConfig("folds must be at least 2".into()));
    }
    if m.len() < folds {
        return Err(EvalError::TooFewRows { need: folds, got: m.len() });
    }
    let label = m.rows[0].subject_id.clone();
    let base_seed = derive_seed_str(spec.seed, &label);
    let (fold_of, flag) = assign_folds(&m.rows, spec.task, folds, base_seed);
    let rounds = (0..folds)
        .into_par_iter()
        .map(|f| {
            let unit_seed = derive_seed(base_seed, f as u64 + 1);
            let pick = |want: bool| {
                let rows = m
                    .rows
                    .iter()
                    .zip(&fold_of)
                    .filter(|(_, &g)| (g == f) == want)
                    .map(|(r, _)| r.clone())
                    .collect();
                FeatureMatrix::from_rows(m.feature_names.clone(), rows)
            };
            let test = pick(true);
            let train = training_rows(pick(false), spec.task, derive_seed(unit_seed, 1));
            let model = fit_ensemble(&Dataset::from_matrix(&train, spec.task), &spec.with_seed(unit_seed))?;
            let scored = score(&model, &test, spec.task)?;
            Ok((
                UnitResult {
                    unit: format!("{label}/fold{f}"),
                    n_train: train.len(),
                    n_test: test.len(),
                    metrics: scored.metrics.clone(),
                    train_rows: ids(&train),
                    test_rows: ids(&test),
                },
                scored,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rounds, flag.map(|f| format!("{label}: {f}")).into_iter().collect()))
}

/// Person-specific CV for every subject; each subject's metrics are taken
/// over its pooled out-of-fold predictions.
pub fn evaluate_person_specific_cohort(
    matrix: &FeatureMatrix,
    spec: &EnsembleSpec,
    folds: usize,
) -> Result<EvaluationReport> {
    let start = Instant::now();
    let subjects = matrix.subjects();
    if subjects.is_empty() {
        return Err(EvalError::TooFewSubjects(0));
    }
    let per_subject: Vec<((UnitResult, Scored), Vec<String>)> = subjects
        .par_iter()
        .map(|s| {
            let m = matrix.subject(s);
            let (rounds, warnings) = person_folds(&m, spec, folds)?;
            let parts: Vec<(&[Prediction], &Target)> =
                rounds.iter().map(|(_, sc)| (sc.predictions.as_slice(), &sc.truths)).collect();
            let metrics = pooled(&parts)?.ok_or(EvalError::Empty)?;
            let mut predictions = Vec::new();
            let mut truths: Vec<&Target> = Vec::new();
            for (_, sc) in &rounds {
                predictions.extend_from_slice(&sc.predictions);
                truths.push(&sc.truths);
            }
            let truths = concat_targets(&truths);
            let unit = UnitResult {
                unit: s.clone(),
                n_train: rounds.iter().map(|(u, _)| u.n_train).max().unwrap_or(0),
                n_test: m.len(),
                metrics: metrics.clone(),
                train_rows: Vec::new(),
                test_rows: rounds.iter().flat_map(|(u, _)| u.test_rows.iter().copied()).collect(),
            };
            Ok((
                (
                    unit,
                    Scored {
                        metrics,
                        predictions,
                        truths,
                    },
                ),
                warnings,
            ))
        })
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let mut rounds = Vec::new();
    for (r, w) in per_subject {
        rounds.push(r);
        warnings.extend(w);
    }
    finish("person_specific", spec, rounds, warnings, start)
}

fn concat_targets(parts: &[&Target]) -> Target {
    match parts.first() {
        Some(Target::Values(_)) => Target::Values(
            parts
                .iter()
                .flat_map(|t| match t {
                    Target::Values(v) => v.clone(),
                    Target::Classes(_) => Vec::new(),
                })
                .collect(),
        ),
        _ => Target::Classes(
            parts
                .iter()
                .flat_map(|t| match t {
                    Target::Classes(v) => v.clone(),
                    Target::Values(_) => Vec::new(),
                })
                .collect(),
        ),
    }
}

/// Mix calibration rows of unseen subjects into the generic rows, shuffle
/// with `seed` and fit.
pub fn calibrate_model(
    generic: &FeatureMatrix,
    calibration: &FeatureMatrix,
    spec: &EnsembleSpec,
    seed: u64,
) -> Result<EnsembleModel> {
    if !calibration.is_empty() && generic.feature_names != calibration.feature_names {
        return Err(EvalError::InvalidConfig("generic and calibration columns differ".into()));
    }
    let generic_subjects: BTreeSet<&str> = generic.rows.iter().map(|r| r.subject_id.as_str()).collect();
    if let Some(r) = calibration
        .rows
        .iter()
        .find(|r| generic_subjects.contains(r.subject_id.as_str()))
    {
        return Err(EvalError::SubjectOverlap(r.subject_id.clone()));
    }
    let mut rows: Vec<FeatureRow> = generic.rows.iter().chain(&calibration.rows).cloned().collect();
    rows.shuffle(&mut rng(seed));
    let mixed = FeatureMatrix::from_rows(generic.feature_names.clone(), rows);
    Ok(fit_ensemble(&Dataset::from_matrix(&mixed, spec.task), spec)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStudy {
    pub importance: ImportanceReport,
    pub rfe: RfeResult,
    /// Integer code used for each subject.
    pub subject_codes: BTreeMap<String, usize>,
}

impl ControlStudy {
    pub fn subject_id_rank(&self) -> Option<usize> {
        self.importance.rank_of(SUBJECT_ID_FEATURE)
    }

    pub fn subject_id_rfe_rank(&self) -> Option<usize> {
        self.rfe.rank_of(SUBJECT_ID_FEATURE)
    }
}

/// Append the subject identity as an integer feature, then rank every
/// feature by impurity importance and by RFE.
pub fn importance_control_study(
    matrix: &FeatureMatrix,
    spec: &EnsembleSpec,
    drop_per_round: usize,
) -> Result<ControlStudy> {
    let subjects = matrix.subjects();
    if subjects.len() < 2 {
        return Err(EvalError::TooFewSubjects(subjects.len()));
    }
    let codes = subject_codes(&subjects);
    let m = matrix.with_column(SUBJECT_ID_FEATURE, |r| codes[&r.subject_id] as f64);
    let data = Dataset::from_matrix(&m, spec.task);
    let model = fit_ensemble(&data, spec)?;
    let importance = feature_importance(&model);
    let rfe = run_rfe(&data, spec, drop_per_round)?;
    Ok(ControlStudy {
        importance,
        rfe,
        subject_codes: codes,
    })
}
