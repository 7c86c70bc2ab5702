use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{argmax, Grower, Response, Tree};
use super::{Dataset, EnsembleKind, EnsembleSpec, Result, Target, Task, TreeError};
use crate::seed::{derive_seed, rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct TrainingMeta {
    pub n_samples: u64,
    pub seed: u64,
    /// Unix seconds; left at 0 unless a caller stamps it.
    pub timestamp: u64,
    pub model_version: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Class { code: u32, probabilities: Vec<f64> },
    Value(f64),
}

impl Prediction {
    pub fn class_code(&self) -> Option<u32> {
        match self {
            Prediction::Class { code, .. } => Some(*code),
            Prediction::Value(_) => None,
        }
    }

    pub fn value(&self) -> Option<f64> {
        match self {
            Prediction::Value(v) => Some(*v),
            Prediction::Class { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub spec: EnsembleSpec,
    pub trees: Vec<Tree>,
    pub tree_weights: Vec<f64>,
    pub feature_names: Vec<String>,
    pub class_codes: Vec<u32>,
    pub meta: TrainingMeta,
}

impl EnsembleModel {
    pub fn task(&self) -> Task {
        self.spec.task
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Predict a row laid out in `feature_names` order.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_features() {
            return Err(TreeError::RowLength {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }

    /// Predict a row whose columns are named; the names must match the
    /// model's feature set exactly, in any order.
    pub fn predict_named(&self, names: &[String], x: &[f64]) -> Result<Prediction> {
        if names.len() != x.len() {
            return Err(TreeError::RowLength {
                expected: names.len(),
                got: x.len(),
            });
        }
        for n in names {
            if !self.feature_names.contains(n) {
                return Err(TreeError::UnexpectedFeature(n.clone()));
            }
        }
        let mut row = Vec::with_capacity(self.n_features());
        for f in &self.feature_names {
            let pos = names
                .iter()
                .position(|n| n == f)
                .ok_or_else(|| TreeError::MissingFeature(f.clone()))?;
            row.push(x[pos]);
        }
        if names.len() != self.n_features() {
            return Err(TreeError::RowLength {
                expected: self.n_features(),
                got: names.len(),
            });
        }
        Ok(self.predict_unchecked(&row))
    }

    pub fn predict_batch(&self, data: &Dataset) -> Result<Vec<Prediction>> {
        if data.n_features != self.n_features() {
            return Err(TreeError::RowLength {
                expected: self.n_features(),
                got: data.n_features,
            });
        }
        Ok((0..data.n_rows())
            .into_par_iter()
            .map(|i| self.predict_unchecked(data.row(i)))
            .collect())
    }

    fn predict_unchecked(&self, x: &[f64]) -> Prediction {
        let total: f64 = self.tree_weights.iter().sum();
        match self.spec.task {
            Task::Classify => {
                let k = self.class_codes.len();
                let mut votes = vec![0.0; k];
                let mut probabilities = vec![0.0; k];
                for (t, &w) in self.trees.iter().zip(&self.tree_weights) {
                    let leaf = t.predict_values(x);
                    votes[argmax(leaf)] += w;
                    for (p, f) in probabilities.iter_mut().zip(leaf) {
                        *p += w * f;
                    }
                }
                for p in &mut probabilities {
                    *p /= total;
                }
                Prediction::Class {
                    code: self.class_codes[argmax(&votes)],
                    probabilities,
                }
            }
            Task::Regress => {
                let s: f64 = self
                    .trees
                    .iter()
                    .zip(&self.tree_weights)
                    .map(|(t, &w)| w * t.predict_value(x))
                    .sum();
                Prediction::Value(s / total)
            }
        }
    }
}

/// Fit an ensemble. Tree `t` uses seed `derive_seed(spec.seed, t)`, so the
/// result does not depend on how trees are scheduled.
pub fn fit_ensemble(data: &Dataset, spec: &EnsembleSpec) -> Result<EnsembleModel> {
    spec.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(TreeError::NoRows);
    }
    if n < 2 {
        return Err(TreeError::TooFewRows { need: 2, got: n });
    }
    if data.n_features == 0 {
        return Err(TreeError::NoFeatures);
    }
    if data.target.task() != spec.task {
        return Err(TreeError::CriterionMismatch {
            criterion: spec.base.criterion,
            task: data.target.task(),
        });
    }
    let (resp, codes) = Response::new(&data.target);
    let (trees, tree_weights) = match spec.kind {
        EnsembleKind::AdaBoost => match &data.target {
            Target::Classes(_) => samme(data, &resp, &codes, spec),
            Target::Values(y) => r2(data, &resp, y, spec),
        },
        _ => {
            let bootstrap = spec.kind != EnsembleKind::ExtraTrees;
            let trees: Vec<Tree> = (0..spec.n_estimators)
                .into_par_iter()
                .map(|t| {
                    let tree_seed = derive_seed(spec.seed, t as u64);
                    let idx = if bootstrap {
                        let mut r = rng(derive_seed(tree_seed, 0));
                        (0..n).map(|_| r.random_range(0..n)).collect()
                    } else {
                        (0..n).collect()
                    };
                    let grow_seed = if bootstrap { derive_seed(tree_seed, 1) } else { tree_seed };
                    Grower::new(data, &resp, None, &spec.base, grow_seed).grow(idx, codes.clone())
                })
                .collect();
            let w = vec![1.0; trees.len()];
            (trees, w)
        }
    };
    Ok(EnsembleModel {
        spec: *spec,
        trees,
        tree_weights,
        feature_names: data.feature_names.clone(),
        class_codes: codes,
        meta: TrainingMeta {
            n_samples: n as u64,
            seed: spec.seed,
            timestamp: 0,
            model_version: 0,
        },
    })
}

/// Keep the sample weights summing to the row count.
fn renormalize(w: &mut [f64]) {
    let s: f64 = w.iter().sum();
    let scale = w.len() as f64 / s;
    for v in w {
        *v *= scale;
    }
}

/// Multi-class AdaBoost (SAMME) on weighted fits.
fn samme(data: &Dataset, resp: &Response, codes: &[u32], spec: &EnsembleSpec) -> (Vec<Tree>, Vec<f64>) {
    let n = data.n_rows();
    let k = codes.len();
    let Response::Class { y, .. } = resp else { unreachable!() };
    let mut w = vec![1.0; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    for t in 0..spec.n_estimators {
        let seed = derive_seed(spec.seed, t as u64);
        let weights = (t > 0).then_some(w.as_slice());
        let tree = Grower::new(data, resp, weights, &spec.base, seed).grow((0..n).collect(), codes.to_vec());
        if k < 2 {
            trees.push(tree);
            alphas.push(1.0);
            break;
        }
        let miss: Vec<bool> = (0..n).map(|i| tree.predict_class_index(data.row(i)) != y[i]).collect();
        let total: f64 = w.iter().sum();
        let err = miss.iter().zip(&w).filter(|(m, _)| **m).map(|(_, v)| v).sum::<f64>() / total;
        if err <= 0.0 {
            trees.push(tree);
            alphas.push(1.0);
            break;
        }
        if err >= 1.0 - 1.0 / k as f64 {
            if trees.is_empty() {
                trees.push(tree);
                alphas.push(1.0);
            }
            break;
        }
        let alpha = spec.learning_rate * (((1.0 - err) / err).ln() + ((k - 1) as f64).ln());
        trees.push(tree);
        alphas.push(alpha);
        for (wi, m) in w.iter_mut().zip(&miss) {
            if *m {
                *wi *= alpha.exp();
            }
        }
        renormalize(&mut w);
    }
    (trees, alphas)
}

/// AdaBoost.R2 with linear loss on weighted fits.
fn r2(data: &Dataset, resp: &Response, y: &[f64], spec: &EnsembleSpec) -> (Vec<Tree>, Vec<f64>) {
    let n = data.n_rows();
    let mut w = vec![1.0; n];
    let mut trees = Vec::new();
    let mut alphas = Vec::new();
    for t in 0..spec.n_estimators {
        let seed = derive_seed(spec.seed, t as u64);
        let weights = (t > 0).then_some(w.as_slice());
        let tree = Grower::new(data, resp, weights, &spec.base, seed).grow((0..n).collect(), Vec::new());
        let err: Vec<f64> = (0..n).map(|i| (y[i] - tree.predict_value(data.row(i))).abs()).collect();
        let d = err.iter().cloned().fold(0.0, f64::max);
        if d <= 0.0 {
            trees.push(tree);
            alphas.push(1.0);
            break;
        }
        let loss: Vec<f64> = err.iter().map(|e| e / d).collect();
        let total: f64 = w.iter().sum();
        let mean_loss = loss.iter().zip(&w).map(|(l, v)| l * v).sum::<f64>() / total;
        if mean_loss >= 0.5 {
            if trees.is_empty() {
                trees.push(tree);
                alphas.push(1.0);
            }
            break;
        }
        let beta = mean_loss / (1.0 - mean_loss);
        trees.push(tree);
        alphas.push(spec.learning_rate * (1.0 / beta).ln());
        for (wi, l) in w.iter_mut().zip(&loss) {
            *wi *= beta.powf(spec.learning_rate * (1.0 - l));
        }
        renormalize(&mut w);
    }
    (trees, alphas)
}
