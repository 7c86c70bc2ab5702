//! CART trees and the Bagging / Random Forest / ExtraTrees / AdaBoost
//! ensembles built on them, with impurity importances, recursive feature
//! elimination and the `.tcm` model format.

mod cart;
pub mod codec;
mod ensemble;
mod importance;

pub use cart::{fit_cart, Node, Tree};
pub use codec::{deserialize_model, serialize_model, CodecError};
pub use ensemble::{fit_ensemble, EnsembleModel, Prediction, TrainingMeta};
pub use importance::{feature_importance, run_rfe, ImportanceEntry, ImportanceReport, RfeResult};

use serde::{Deserialize, Serialize};

use crate::hrv::FeatureMatrix;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TreeError {
    #[error("no training rows")]
    NoRows,
    #[error("no features")]
    NoFeatures,
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("criterion {criterion:?} does not fit task {task:?}")]
    CriterionMismatch { criterion: Criterion, task: Task },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("missing feature {0:?}")]
    MissingFeature(String),
    #[error("unexpected feature {0:?}")]
    UnexpectedFeature(String),
    #[error("row has {got} values, model expects {expected}")]
    RowLength { expected: usize, got: usize },
    #[error("drop_per_round {drop} must be in 1..{features}")]
    RfeDrop { drop: usize, features: usize },
}

pub type Result<T, E = TreeError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Classify,
    Regress,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    Bagging,
    RandomForest,
    ExtraTrees,
    AdaBoost,
}

impl EnsembleKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "bagging" => Some(Self::Bagging),
            "rf" | "random_forest" => Some(Self::RandomForest),
            "extratrees" | "extra_trees" => Some(Self::ExtraTrees),
            "adaboost" => Some(Self::AdaBoost),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Bagging => "bagging",
            Self::RandomForest => "rf",
            Self::ExtraTrees => "extratrees",
            Self::AdaBoost => "adaboost",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Scan every midpoint between sorted distinct values.
    Best,
    /// One uniform threshold per candidate feature.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::Count(c) => c,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Variance,
}

impl Criterion {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Classify => Criterion::Gini,
            Task::Regress => Criterion::Variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_samples_split: usize,
    pub split_strategy: SplitStrategy,
    pub max_features: MaxFeatures,
    pub criterion: Criterion,
}

impl TreeParams {
    pub fn new(task: Task) -> Self {
        Self {
            max_depth: 64,
            min_samples_leaf: 1,
            min_samples_split: 2,
            split_strategy: SplitStrategy::Best,
            max_features: MaxFeatures::All,
            criterion: Criterion::for_task(task),
        }
    }

    pub fn with_max_depth(mut self, depth: usize) -> Self {
        self.max_depth = depth;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(TreeError::InvalidParams("max_depth must be at least 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(TreeError::InvalidParams("min_samples_leaf must be at least 1".into()));
        }
        if self.min_samples_split < 2 {
            return Err(TreeError::InvalidParams("min_samples_split must be at least 2".into()));
        }
        if let MaxFeatures::Count(0) = self.max_features {
            return Err(TreeError::InvalidParams("max_features must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub n_estimators: usize,
    pub base: TreeParams,
    pub task: Task,
    pub seed: u64,
    /// AdaBoost shrinkage; unused by the other kinds.
    pub learning_rate: f64,
}

impl EnsembleSpec {
    /// Defaults: 100 trees for RF/ExtraTrees, 50 for Bagging/AdaBoost,
    /// depth 64 throughout.
    pub fn new(kind: EnsembleKind, task: Task, seed: u64) -> Self {
        let mut base = TreeParams::new(task);
        let n_estimators = match kind {
            EnsembleKind::Bagging | EnsembleKind::AdaBoost => 50,
            EnsembleKind::RandomForest | EnsembleKind::ExtraTrees => 100,
        };
        match kind {
            EnsembleKind::RandomForest => base.max_features = MaxFeatures::Sqrt,
            EnsembleKind::ExtraTrees => {
                base.max_features = MaxFeatures::Sqrt;
                base.split_strategy = SplitStrategy::Random;
            }
            EnsembleKind::Bagging | EnsembleKind::AdaBoost => {}
        }
        Self {
            kind,
            n_estimators,
            base,
            task,
            seed,
            learning_rate: 1.0,
        }
    }

    pub fn extra_trees(task: Task, seed: u64) -> Self {
        Self::new(EnsembleKind::ExtraTrees, task, seed)
    }

    pub fn with_estimators(mut self, n: usize) -> Self {
        self.n_estimators = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.n_estimators < 1 {
            return Err(TreeError::InvalidParams("n_estimators must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TreeError::InvalidParams("learning_rate must be positive".into()));
        }
        if self.base.criterion != Criterion::for_task(self.task) {
            return Err(TreeError::CriterionMismatch {
                criterion: self.base.criterion,
                task: self.task,
            });
        }
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Classes(Vec<u32>),
    Values(Vec<f64>),
}

impl Target {
    pub fn len(&self) -> usize {
        match self {
            Target::Classes(c) => c.len(),
            Target::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn task(&self) -> Task {
        match self {
            Target::Classes(_) => Task::Classify,
            Target::Values(_) => Task::Regress,
        }
    }
}

/// Dense row-major training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub n_features: usize,
    pub x: Vec<f64>,
    pub target: Target,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, rows: &[Vec<f64>], target: Target) -> Self {
        let n_features = feature_names.len();
        assert_eq!(rows.len(), target.len(), "rows and targets differ in length");
        let mut x = Vec::with_capacity(rows.len() * n_features);
        for r in rows {
            assert_eq!(r.len(), n_features, "ragged row");
            x.extend_from_slice(r);
        }
        Self {
            feature_names,
            n_features,
            x,
            target,
        }
    }

    /// Condition codes as classes, or comfort as the regression target.
    pub fn from_matrix(m: &FeatureMatrix, task: Task) -> Self {
        let n_features = m.n_features();
        let mut x = Vec::with_capacity(m.len() * n_features);
        for r in &m.rows {
            x.extend_from_slice(&r.values);
        }
        let target = match task {
            Task::Classify => Target::Classes(m.rows.iter().map(|r| r.condition.code()).collect()),
            Task::Regress => Target::Values(m.rows.iter().map(|r| r.comfort).collect()),
        };
        Self {
            feature_names: m.feature_names.clone(),
            n_features,
            x,
            target,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn value(&self, i: usize, f: usize) -> f64 {
        self.x[i * self.n_features + f]
    }
}
