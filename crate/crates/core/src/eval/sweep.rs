use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::regimes::score;
use super::{calibrate_model, mean_std, rebalance_classes, EvalError, Metrics, Result};
use crate::hrv::{FeatureMatrix, FeatureRow};
use crate::seed::{derive_seed, derive_seed_str, rng};
use crate::trees::{EnsembleSpec, Task};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Earliest rows of each condition series, dealt evenly across series.
    ChronoPrefix,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Unseen subjects per repeat.
    pub q: usize,
    pub k_grid: Vec<usize>,
    pub selection: SelectionPolicy,
    pub seed: u64,
    pub repeats: usize,
    /// Split each k across the q subjects instead of taking k from each.
    pub pooled_k: bool,
    /// Rows each unseen subject must keep for testing.
    pub min_test_reserve: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            q: 3,
            k_grid: vec![0, 100, 200, 300, 400],
            selection: SelectionPolicy::ChronoPrefix,
            seed: 42,
            repeats: 3,
            pooled_k: false,
            min_test_reserve: 100,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self, n_subjects: usize) -> Result<()> {
        if self.q < 1 {
            return Err(EvalError::InvalidConfig("q must be at least 1".into()));
        }
        if 2 * self.q >= n_subjects {
            return Err(EvalError::InvalidConfig(format!(
                "q = {} must be below half of the {n_subjects} subjects",
                self.q
            )));
        }
        if self.repeats < 1 {
            return Err(EvalError::InvalidConfig("repeats must be at least 1".into()));
        }
        if self.k_grid.is_empty() {
            return Err(EvalError::InvalidConfig("k grid is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    /// NaN when every unit at this k was skipped.
    pub mean: f64,
    pub std: f64,
    pub n_units: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub metric: String,
    pub points: Vec<CurvePoint>,
}

impl CalibrationCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,metric_mean,metric_std\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.k, p.mean, p.std);
        }
        out
    }

    pub fn at(&self, k: usize) -> Option<&CurvePoint> {
        self.points.iter().find(|p| p.k == k)
    }
}

/// One unseen subject scored at one k in one repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepUnit {
    pub repeat: usize,
    pub k: usize,
    pub subject: String,
    pub n_train: usize,
    pub n_calibration: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    #[serde(skip)]
    pub train_rows: Vec<u64>,
    #[serde(skip)]
    pub calibration_rows: Vec<u64>,
    #[serde(skip)]
    pub test_rows: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: Task,
    pub spec: EnsembleSpec,
    pub config: CalibrationConfig,
    /// Unseen subjects of each repeat.
    pub held_out: Vec<Vec<String>>,
    pub units: Vec<SweepUnit>,
    pub curves: Vec<CalibrationCurve>,
    pub warnings: Vec<String>,
}

impl SweepReport {
    pub fn curve(&self, metric: &str) -> Option<&CalibrationCurve> {
        self.curves.iter().find(|c| c.metric == metric)
    }

    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            out.push_str(&serde_json::to_string(u).expect("unit serializes"));
            out.push('\n');
        }
        out
    }
}

/// Row indices (into `rows`) chosen as calibration samples.
fn select(rows: &[FeatureRow], k: usize, policy: SelectionPolicy, seed: u64) -> Vec<usize> {
    match policy {
        SelectionPolicy::ChronoPrefix => {
            // rows arrive ordered by (condition, window); deal one row at a
            // time from the front of each series
            let mut series: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
            for (i, r) in rows.iter().enumerate() {
                series.entry(r.condition.code()).or_default().push(i);
            }
            for s in series.values_mut() {
                s.sort_by_key(|&i| rows[i].window_index);
            }
            let series: Vec<Vec<usize>> = series.into_values().collect();
            let mut next = vec![0usize; series.len()];
            let mut out = Vec::with_capacity(k);
            while out.len() < k {
                let mut progressed = false;
                for (s, pos) in series.iter().zip(next.iter_mut()) {
                    if out.len() == k {
                        break;
                    }
                    if *pos < s.len() {
                        out.push(s[*pos]);
                        *pos += 1;
                        progressed = true;
                    }
                }
                if !progressed {
                    break;
                }
            }
            out.sort_unstable();
            out
        }
        SelectionPolicy::Random => {
            let mut idx: Vec<usize> = (0..rows.len()).collect();
            idx.shuffle(&mut rng(seed));
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
    }
}

fn metric_names(task: Task) -> &'static [&'static str] {
    match task {
        Task::Classify => &["accuracy"],
        Task::Regress => &["rmse", "r2"],
    }
}

/// Calibration curve: for each repeat hold out `q` subjects, then for each
/// k train on the remaining subjects plus k calibration rows of each unseen
/// subject and score that subject's other rows.
pub fn calibration_sweep(matrix: &FeatureMatrix, cfg: &CalibrationConfig, spec: &EnsembleSpec) -> Result<SweepReport> {
    let mut subjects = matrix.subjects();
    subjects.sort();
    cfg.validate(subjects.len())?;
    let by_subject: BTreeMap<&str, FeatureMatrix> =
        subjects.iter().map(|s| (s.as_str(), matrix.subject(s))).collect();

    let held_out: Vec<Vec<String>> = (0..cfg.repeats)
        .map(|r| {
            let mut s = subjects.clone();
            s.shuffle(&mut rng(derive_seed(cfg.seed, r as u64)));
            s.truncate(cfg.q);
            s.sort();
            s
        })
        .collect();

    let jobs: Vec<(usize, usize)> = (0..cfg.repeats)
        .flat_map(|r| cfg.k_grid.iter().map(move |&k| (r, k)))
        .collect();
    let results: Vec<(Vec<SweepUnit>, Vec<String>)> = jobs
        .par_iter()
        .map(|&(r, k)| {
            let r_seed = derive_seed(cfg.seed, r as u64);
            let held = &held_out[r];
            let mut generic = matrix.filter(|row| !held.contains(&row.subject_id));
            if spec.task == Task::Classify {
                generic = rebalance_classes(&generic, derive_seed(r_seed, 1));
            }
            let mut warnings = Vec::new();
            let mut calibration = FeatureMatrix::new(matrix.feature_names.clone());
            let mut tests: Vec<(String, FeatureMatrix, Vec<u64>)> = Vec::new();
            for (i, s) in held.iter().enumerate() {
                let rows = &by_subject[s.as_str()].rows;
                let k_s = if cfg.pooled_k {
                    k / cfg.q + usize::from(i < k % cfg.q)
                } else {
                    k
                };
                if rows.len() < k_s + cfg.min_test_reserve {
                    warnings.push(format!(
                        "repeat {r}: k = {k} skipped for {s}: {} rows leave fewer than {} test rows",
                        rows.len(),
                        cfg.min_test_reserve
                    ));
                    continue;
                }
                let chosen = select(rows, k_s, cfg.selection, derive_seed(derive_seed_str(r_seed, s), k as u64));
                let mut is_cal = vec![false; rows.len()];
                for &c in &chosen {
                    is_cal[c] = true;
                }
                let cal_rows: Vec<FeatureRow> = chosen.iter().map(|&c| rows[c].clone()).collect();
                let cal_ids = cal_rows.iter().map(|r| r.row_id).collect();
                calibration.rows.extend(cal_rows);
                let test = FeatureMatrix::from_rows(
                    matrix.feature_names.clone(),
                    rows.iter().zip(&is_cal).filter(|(_, c)| !**c).map(|(r, _)| r.clone()).collect(),
                );
                tests.push((s.clone(), test, cal_ids));
            }
            if tests.is_empty() {
                return Ok((Vec::new(), warnings));
            }
            let model_spec = spec.with_seed(derive_seed(r_seed, 2));
            let model = calibrate_model(&generic, &calibration, &model_spec, derive_seed(r_seed, 3))?;
            let train_rows: Vec<u64> = generic
                .rows
                .iter()
                .chain(&calibration.rows)
                .map(|row| row.row_id)
                .collect();
            let mut units = Vec::new();
            for (s, test, cal_ids) in tests {
                let scored = score(&model, &test, spec.task)?;
                units.push(SweepUnit {
                    repeat: r,
                    k,
                    subject: s,
                    n_train: train_rows.len(),
                    n_calibration: cal_ids.len(),
                    n_test: test.len(),
                    metrics: scored.metrics,
                    train_rows: train_rows.clone(),
                    calibration_rows: cal_ids,
                    test_rows: test.rows.iter().map(|row| row.row_id).collect(),
                });
            }
            Ok((units, warnings))
        })
        .collect::<Result<_>>()?;

    let mut units = Vec::new();
    let mut warnings = Vec::new();
    for (u, w) in results {
        units.extend(u);
        warnings.extend(w);
    }
    let curves = metric_names(spec.task)
        .iter()
        .map(|&name| CalibrationCurve {
            metric: name.to_string(),
            points: cfg
                .k_grid
                .iter()
                .map(|&k| {
                    let vals: Vec<f64> =
                        units.iter().filter(|u| u.k == k).filter_map(|u| u.metrics.get(name)).collect();
                    let (mean, std) = mean_std(&vals);
                    CurvePoint {
                        k,
                        mean,
                        std,
                        n_units: vals.len(),
                    }
                })
                .collect(),
        })
        .collect();
    Ok(SweepReport {
        task: spec.task,
        spec: *spec,
        config: cfg.clone(),
        held_out,
        units,
        curves,
        warnings,
    })
}
