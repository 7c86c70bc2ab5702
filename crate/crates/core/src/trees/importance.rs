use serde::{Deserialize, Serialize};

use super::{fit_ensemble, Dataset, EnsembleModel, EnsembleSpec, Result, TreeError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    pub importance: f64,
    pub rank: usize,
}

/// Entries sorted by rank (1 = most important).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub entries: Vec<ImportanceEntry>,
}

impl ImportanceReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.rank)
    }

    pub fn importance_of(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.importance)
    }
}

/// Per-feature mean decrease in impurity in model column order; `None` when
/// no tree has a split with positive decrease.
pub(crate) fn raw_importances(model: &EnsembleModel) -> Option<Vec<f64>> {
    let nf = model.n_features();
    let mut total = vec![0.0; nf];
    let mut weight_sum = 0.0;
    for (tree, &tw) in model.trees.iter().zip(&model.tree_weights) {
        let root = tree.nodes[0].weight;
        let mut per = vec![0.0; nf];
        for n in tree.nodes.iter().filter(|n| !n.is_leaf()) {
            let l = &tree.nodes[n.left as usize];
            let r = &tree.nodes[n.right as usize];
            let decrease = n.weight * n.impurity - l.weight * l.impurity - r.weight * r.impurity;
            per[n.feature as usize] += decrease.max(0.0) / root;
        }
        let s: f64 = per.iter().sum();
        if s > 0.0 {
            for (t, p) in total.iter_mut().zip(&per) {
                *t += tw * p / s;
            }
            weight_sum += tw;
        }
    }
    if weight_sum <= 0.0 {
        return None;
    }
    let s: f64 = total.iter().sum();
    Some(total.iter().map(|t| (t / s).max(0.0)).collect())
}

/// Indices ordered by decreasing importance, lower index first on ties.
fn order_by_importance(imp: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..imp.len()).collect();
    idx.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    idx
}

/// Impurity importances normalised to sum to 1; empty for a splitless model.
pub fn feature_importance(model: &EnsembleModel) -> ImportanceReport {
    let Some(imp) = raw_importances(model) else {
        return ImportanceReport::default();
    };
    let entries = order_by_importance(&imp)
        .into_iter()
        .enumerate()
        .map(|(r, i)| ImportanceEntry {
            feature: model.feature_names[i].clone(),
            importance: imp[i],
            rank: r + 1,
        })
        .collect();
    ImportanceReport { entries }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    /// (feature, rank) sorted by rank; rank 1 survived longest.
    pub ranking: Vec<(String, usize)>,
    /// Features in the order they were removed.
    pub eliminated: Vec<String>,
    pub n_fits: usize,
}

impl RfeResult {
    pub fn rank_of(&self, feature: &str) -> Option<usize> {
        self.ranking.iter().find(|(f, _)| f == feature).map(|(_, r)| *r)
    }
}

fn project(data: &Dataset, cols: &[usize]) -> Dataset {
    let n = data.n_rows();
    let mut x = Vec::with_capacity(n * cols.len());
    for i in 0..n {
        let row = data.row(i);
        x.extend(cols.iter().map(|&c| row[c]));
    }
    Dataset {
        feature_names: cols.iter().map(|&c| data.feature_names[c].clone()).collect(),
        n_features: cols.len(),
        x,
        target: data.target.clone(),
    }
}

/// Recursive feature elimination: fit, drop the `drop_per_round` least
/// important features, refit, until one remains.
pub fn run_rfe(data: &Dataset, spec: &EnsembleSpec, drop_per_round: usize) -> Result<RfeResult> {
    let nf = data.n_features;
    if nf < 2 {
        return Err(TreeError::NoFeatures);
    }
    if drop_per_round == 0 || drop_per_round >= nf {
        return Err(TreeError::RfeDrop {
            drop: drop_per_round,
            features: nf,
        });
    }
    let mut active: Vec<usize> = (0..nf).collect();
    let mut eliminated = Vec::with_capacity(nf);
    let mut n_fits = 0;
    while active.len() > 1 {
        let model = fit_ensemble(&project(data, &active), spec)?;
        n_fits += 1;
        let imp = raw_importances(&model).unwrap_or_else(|| vec![0.0; active.len()]);
        let order = order_by_importance(&imp);
        let n_drop = drop_per_round.min(active.len() - 1);
        // least important first
        let dropped: Vec<usize> = order.iter().rev().take(n_drop).map(|&i| active[i]).collect();
        eliminated.extend(dropped.iter().copied());
        active.retain(|c| !dropped.contains(c));
    }
    eliminated.push(active[0]);
    let ranking = eliminated
        .iter()
        .rev()
        .enumerate()
        .map(|(r, &c)| (data.feature_names[c].clone(), r + 1))
        .collect();
    eliminated.pop();
    Ok(RfeResult {
        ranking,
        eliminated: eliminated.iter().map(|&c| data.feature_names[c].clone()).collect(),
        n_fits,
    })
}
