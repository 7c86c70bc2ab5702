use std::fmt::Write as _;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{mean_std, Metrics};
use crate::trees::{EnsembleSpec, Task};

/// Metrics of one evaluation unit (a held-out subject or a fold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitResult {
    pub unit: String,
    pub n_train: usize,
    pub n_test: usize,
    pub metrics: Metrics,
    /// Row provenance ids; kept in memory for leakage checks only.
    #[serde(skip)]
    pub train_rows: Vec<u64>,
    #[serde(skip)]
    pub test_rows: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_units: usize,
}

impl Aggregate {
    /// Mean ± std over units, for every scalar metric they carry.
    pub fn over(units: &[UnitResult]) -> Vec<Aggregate> {
        let Some(first) = units.first() else {
            return Vec::new();
        };
        first
            .metrics
            .scalars()
            .into_iter()
            .map(|(name, _)| {
                let vals: Vec<f64> = units.iter().filter_map(|u| u.metrics.get(name)).collect();
                let (mean, std) = mean_std(&vals);
                Aggregate {
                    metric: name.to_string(),
                    mean,
                    std,
                    n_units: vals.len(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub regime: String,
    pub task: Task,
    pub spec: EnsembleSpec,
    pub seed: u64,
    pub units: Vec<UnitResult>,
    pub aggregate: Vec<Aggregate>,
    /// Metrics over the concatenation of every unit's predictions.
    pub pooled: Option<Metrics>,
    pub warnings: Vec<String>,
    /// Run time; logged, never written to result files.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl EvaluationReport {
    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.aggregate.iter().find(|a| a.metric == metric).map(|a| a.mean)
    }

    pub fn unit(&self, name: &str) -> Option<&UnitResult> {
        self.units.iter().find(|u| u.unit == name)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let names: Vec<&str> = self
            .units
            .first()
            .map(|u| u.metrics.scalars().into_iter().map(|(n, _)| n).collect())
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "{} | {} | {} | seed {}",
            self.regime,
            self.spec.kind.name(),
            match self.task {
                Task::Classify => "classify",
                Task::Regress => "regress",
            },
            self.seed
        );
        let _ = write!(out, "{:<12} {:>8} {:>8}", "unit", "n_train", "n_test");
        for n in &names {
            let _ = write!(out, " {n:>10}");
        }
        out.push('\n');
        for u in &self.units {
            let _ = write!(out, "{:<12} {:>8} {:>8}", u.unit, u.n_train, u.n_test);
            for (_, v) in u.metrics.scalars() {
                let _ = write!(out, " {v:>10.4}");
            }
            out.push('\n');
        }
        for a in &self.aggregate {
            let _ = writeln!(out, "{:<12} {:.4} ± {:.4} over {} units", a.metric, a.mean, a.std, a.n_units);
        }
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    /// One JSON object per unit, newline separated.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for u in &self.units {
            let rec = serde_json::json!({
                "regime": self.regime,
                "unit": u.unit,
                "n_train": u.n_train,
                "n_test": u.n_test,
                "metrics": u.metrics,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        out
    }
}
