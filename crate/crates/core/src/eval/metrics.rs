use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::trees::{Prediction, Target};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub n: usize,
    pub accuracy: f64,
    /// Class codes indexing `confusion` rows (truth) and columns (prediction).
    pub labels: Vec<u32>,
    pub confusion: Vec<Vec<u64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub n: usize,
    pub rmse: f64,
    /// About the test-set mean; may be negative.
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metrics {
    Classification(ClassificationMetrics),
    Regression(RegressionMetrics),
}

impl Metrics {
    /// Named scalar metrics in a fixed order.
    pub fn scalars(&self) -> Vec<(&'static str, f64)> {
        match self {
            Metrics::Classification(c) => vec![("accuracy", c.accuracy)],
            Metrics::Regression(r) => vec![("rmse", r.rmse), ("r2", r.r2)],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.scalars().into_iter().find(|(n, _)| *n == name).map(|(_, v)| v)
    }

    pub fn n(&self) -> usize {
        match self {
            Metrics::Classification(c) => c.n,
            Metrics::Regression(r) => r.n,
        }
    }
}

pub fn classification_metrics(predictions: &[u32], truths: &[u32]) -> Result<ClassificationMetrics> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut labels: Vec<u32> = predictions.iter().chain(truths).copied().collect();
    labels.sort_unstable();
    labels.dedup();
    let k = labels.len();
    let pos = |c: u32| labels.binary_search(&c).expect("label present");
    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &t) in predictions.iter().zip(truths) {
        confusion[pos(t)][pos(p)] += 1;
    }
    let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
    Ok(ClassificationMetrics {
        n: truths.len(),
        accuracy: trace as f64 / truths.len() as f64,
        labels,
        confusion,
    })
}

pub fn regression_metrics(predictions: &[f64], truths: &[f64]) -> Result<RegressionMetrics> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    if truths.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = truths.len() as f64;
    let mean = truths.iter().sum::<f64>() / n;
    let ss_res: f64 = predictions.iter().zip(truths).map(|(p, t)| (t - p) * (t - p)).sum();
    let ss_tot: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(RegressionMetrics {
        n: truths.len(),
        rmse: (ss_res / n).sqrt(),
        r2,
    })
}

pub fn compute_metrics(predictions: &[Prediction], truths: &Target) -> Result<Metrics> {
    if predictions.len() != truths.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    match truths {
        Target::Classes(t) => {
            let p = predictions
                .iter()
                .map(|p| p.class_code().ok_or(EvalError::TaskMismatch))
                .collect::<Result<Vec<_>>>()?;
            Ok(Metrics::Classification(classification_metrics(&p, t)?))
        }
        Target::Values(t) => {
            let p = predictions
                .iter()
                .map(|p| p.value().ok_or(EvalError::TaskMismatch))
                .collect::<Result<Vec<_>>>()?;
            Ok(Metrics::Regression(regression_metrics(&p, t)?))
        }
    }
}
