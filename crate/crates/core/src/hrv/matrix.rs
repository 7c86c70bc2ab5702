use std::collections::BTreeSet;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::{compute_features, make_windows, registry_names, WindowError, WindowSpec};
use crate::ingest::{ConditionLabel, LabeledSeries};

#[derive(Debug, thiserror::Error)]
pub enum MatrixError {
    #[error("series {subject_id}/{condition}: {source}")]
    Window {
        subject_id: String,
        condition: ConditionLabel,
        #[source]
        source: WindowError,
    },
    #[error("series {subject_id}/{condition}: window {window_index} has no label")]
    Unlabeled {
        subject_id: String,
        condition: ConditionLabel,
        window_index: usize,
    },
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    /// Provenance id, unique within a matrix.
    pub row_id: u64,
    pub subject_id: String,
    pub condition: ConditionLabel,
    pub comfort: f64,
    pub window_index: usize,
    pub values: Vec<f64>,
}

/// Rectangular table of window features with labels and subject identity.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub feature_names: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureMatrix {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self {
            feature_names,
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Distinct subjects in order of first appearance.
    pub fn subjects(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.subject_id.as_str()))
            .map(|r| r.subject_id.clone())
            .collect()
    }

    pub fn filter(&self, mut keep: impl FnMut(&FeatureRow) -> bool) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: self.feature_names.clone(),
            rows: self.rows.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }

    pub fn subject(&self, subject_id: &str) -> FeatureMatrix {
        self.filter(|r| r.subject_id == subject_id)
    }

    pub fn from_rows(feature_names: Vec<String>, rows: Vec<FeatureRow>) -> Self {
        Self { feature_names, rows }
    }

    /// Append rows of another matrix with the same columns.
    pub fn extend(&mut self, other: &FeatureMatrix) {
        assert_eq!(self.feature_names, other.feature_names, "column mismatch");
        self.rows.extend(other.rows.iter().cloned());
    }

    /// Column projection by index.
    pub fn select_columns(&self, columns: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            feature_names: columns.iter().map(|&c| self.feature_names[c].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| FeatureRow {
                    values: columns.iter().map(|&c| r.values[c]).collect(),
                    ..r.clone()
                })
                .collect(),
        }
    }

    /// Append a derived column.
    pub fn with_column(&self, name: &str, f: impl Fn(&FeatureRow) -> f64) -> FeatureMatrix {
        let mut names = self.feature_names.clone();
        names.push(name.to_string());
        FeatureMatrix {
            feature_names: names,
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut r2 = r.clone();
                    r2.values.push(f(r));
                    r2
                })
                .collect(),
        }
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<(), MatrixError> {
        write!(out, "subject_id,condition,comfort,window_index")?;
        for n in &self.feature_names {
            write!(out, ",{n}")?;
        }
        writeln!(out)?;
        for r in &self.rows {
            write!(
                out,
                "{},{},{:.16e},{}",
                r.subject_id,
                r.condition.code(),
                r.comfort,
                r.window_index
            )?;
            for v in &r.values {
                write!(out, ",{v:.16e}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv); row ids follow file order.
    pub fn read_csv(input: impl Read) -> Result<FeatureMatrix, MatrixError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
        let header = rdr.headers()?.clone();
        let fixed = ["subject_id", "condition", "comfort", "window_index"];
        if header.len() < 4 || header.iter().take(4).ne(fixed.iter().copied()) {
            return Err(MatrixError::Malformed {
                line: 1,
                message: format!("header must start with {}", fixed.join(",")),
            });
        }
        let names: Vec<String> = header.iter().skip(4).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(i as u64 + 2, |p| p.line());
            let bad = |message: String| MatrixError::Malformed { line, message };
            let num = |s: &str| -> Result<f64, MatrixError> {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("invalid number {s:?}")))
            };
            let condition = rec[1]
                .parse::<u32>()
                .ok()
                .and_then(ConditionLabel::from_code)
                .ok_or_else(|| bad(format!("unknown condition {:?}", &rec[1])))?;
            let window_index = rec[3]
                .parse::<usize>()
                .map_err(|_| bad(format!("invalid window index {:?}", &rec[3])))?;
            let values = rec.iter().skip(4).map(num).collect::<Result<Vec<_>, _>>()?;
            rows.push(FeatureRow {
                row_id: i as u64,
                subject_id: rec[0].to_string(),
                condition,
                comfort: num(&rec[2])?,
                window_index,
                values,
            });
        }
        Ok(FeatureMatrix {
            feature_names: names,
            rows,
        })
    }
}

/// Features for every window of every series, ordered by
/// (subject, condition, window index). Each row is labelled with its last
/// beat's annotation.
pub fn extract_feature_matrix(
    series: &[LabeledSeries],
    spec: &WindowSpec,
) -> Result<FeatureMatrix, MatrixError> {
    let mut order: Vec<&LabeledSeries> = series.iter().collect();
    order.sort_by(|a, b| {
        (a.series.subject_id.as_str(), a.series.condition)
            .cmp(&(b.series.subject_id.as_str(), b.series.condition))
    });
    let blocks: Vec<Vec<FeatureRow>> = order
        .par_iter()
        .map(|ls| series_rows(ls, spec))
        .collect::<Result<_, _>>()?;
    let mut rows: Vec<FeatureRow> = blocks.into_iter().flatten().collect();
    for (i, r) in rows.iter_mut().enumerate() {
        r.row_id = i as u64;
    }
    Ok(FeatureMatrix {
        feature_names: registry_names(),
        rows,
    })
}

fn series_rows(ls: &LabeledSeries, spec: &WindowSpec) -> Result<Vec<FeatureRow>, MatrixError> {
    let s = &ls.series;
    let windows = make_windows(&s.samples, spec).map_err(|source| MatrixError::Window {
        subject_id: s.subject_id.clone(),
        condition: s.condition,
        source,
    })?;
    windows
        .iter()
        .map(|w| {
            let label = ls.labels[w.end_beat].ok_or_else(|| MatrixError::Unlabeled {
                subject_id: s.subject_id.clone(),
                condition: s.condition,
                window_index: w.window_index,
            })?;
            Ok(FeatureRow {
                row_id: 0,
                subject_id: s.subject_id.clone(),
                condition: s.condition,
                comfort: label.comfort,
                window_index: w.window_index,
                values: compute_features(w.beats).values.to_vec(),
            })
        })
        .collect()
}
