use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Result, SplitStrategy, Target, TreeError, TreeParams};
use crate::seed::rng;

/// Flat tree node. Leaves have `feature == -1` and no children.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub feature: i32,
    pub threshold: f64,
    pub left: i32,
    pub right: i32,
    /// Impurity per unit weight at this node.
    pub impurity: f64,
    /// Weighted sample count reaching the node during training.
    pub weight: f64,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature < 0
    }
}

/// A fitted CART tree. `values` holds `n_outputs` numbers per node: class
/// frequencies (indexed like `class_codes`) or the mean target.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_outputs: usize,
    pub values: Vec<f64>,
    pub class_codes: Vec<u32>,
}

impl Tree {
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0usize;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return i;
            }
            i = if x[n.feature as usize] <= n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn node_values(&self, node: usize) -> &[f64] {
        &self.values[node * self.n_outputs..(node + 1) * self.n_outputs]
    }

    pub fn predict_values(&self, x: &[f64]) -> &[f64] {
        self.node_values(self.leaf_index(x))
    }

    /// Index into `class_codes` of the most frequent class, lowest on ties.
    pub fn predict_class_index(&self, x: &[f64]) -> usize {
        argmax(self.predict_values(x))
    }

    pub fn predict_class(&self, x: &[f64]) -> u32 {
        self.class_codes[self.predict_class_index(x)]
    }

    pub fn predict_value(&self, x: &[f64]) -> f64 {
        self.predict_values(x)[0]
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + walk(t, n.left as usize).max(walk(t, n.right as usize))
            }
        }
        walk(self, 0)
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| !n.is_leaf()).count()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Targets prepared for growing: class indices or raw values.
pub(crate) enum Response<'a> {
    Class { y: Vec<usize>, n_classes: usize },
    Value(&'a [f64]),
}

impl<'a> Response<'a> {
    /// Also returns the sorted distinct class codes.
    pub(crate) fn new(target: &'a Target) -> (Self, Vec<u32>) {
        match target {
            Target::Classes(c) => {
                let mut codes = c.clone();
                codes.sort_unstable();
                codes.dedup();
                let y = c
                    .iter()
                    .map(|v| codes.binary_search(v).expect("code present"))
                    .collect();
                let n_classes = codes.len();
                (Response::Class { y, n_classes }, codes)
            }
            Target::Values(v) => (Response::Value(v), Vec::new()),
        }
    }

    fn n_outputs(&self) -> usize {
        match self {
            Response::Class { n_classes, .. } => *n_classes,
            Response::Value(_) => 1,
        }
    }
}

/// Weighted sufficient statistics of a node.
#[derive(Clone, Debug)]
enum Acc {
    Class { w: f64, counts: Vec<f64> },
    Value { w: f64, s: f64, s2: f64 },
}

impl Acc {
    fn empty(resp: &Response) -> Self {
        match resp {
            Response::Class { n_classes, .. } => Acc::Class {
                w: 0.0,
                counts: vec![0.0; *n_classes],
            },
            Response::Value(_) => Acc::Value {
                w: 0.0,
                s: 0.0,
                s2: 0.0,
            },
        }
    }

    fn add(&mut self, resp: &Response, i: usize, wi: f64) {
        match (self, resp) {
            (Acc::Class { w, counts }, Response::Class { y, .. }) => {
                *w += wi;
                counts[y[i]] += wi;
            }
            (Acc::Value { w, s, s2 }, Response::Value(y)) => {
                *w += wi;
                *s += wi * y[i];
                *s2 += wi * y[i] * y[i];
            }
            _ => unreachable!("accumulator and response disagree"),
        }
    }

    fn weight(&self) -> f64 {
        match self {
            Acc::Class { w, .. } | Acc::Value { w, .. } => *w,
        }
    }

    /// Weight times impurity.
    fn weighted_impurity(&self) -> f64 {
        match self {
            Acc::Class { w, counts } => {
                if *w <= 0.0 {
                    0.0
                } else {
                    (w - counts.iter().map(|c| c * c).sum::<f64>() / w).max(0.0)
                }
            }
            Acc::Value { w, s, s2 } => {
                if *w <= 0.0 {
                    0.0
                } else {
                    (s2 - s * s / w).max(0.0)
                }
            }
        }
    }

    /// Weighted impurity of `self - left`, the right child.
    fn complement_weighted_impurity(&self, left: &Acc) -> f64 {
        match (self, left) {
            (Acc::Class { w, counts }, Acc::Class { w: wl, counts: cl }) => {
                let wr = w - wl;
                if wr <= 0.0 {
                    return 0.0;
                }
                let sq: f64 = counts.iter().zip(cl).map(|(a, b)| (a - b) * (a - b)).sum();
                (wr - sq / wr).max(0.0)
            }
            (Acc::Value { w, s, s2 }, Acc::Value { w: wl, s: sl, s2: s2l }) => {
                let wr = w - wl;
                if wr <= 0.0 {
                    return 0.0;
                }
                let sr = s - sl;
                ((s2 - s2l) - sr * sr / wr).max(0.0)
            }
            _ => unreachable!(),
        }
    }

    fn leaf_values(&self, out: &mut Vec<f64>) {
        match self {
            Acc::Class { w, counts } => {
                if *w > 0.0 {
                    out.extend(counts.iter().map(|c| c / w));
                } else {
                    out.extend(counts.iter().map(|_| 0.0));
                }
            }
            Acc::Value { w, s, .. } => out.push(if *w > 0.0 { s / w } else { 0.0 }),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Split {
    /// Larger gain wins; exact ties go to the lower feature, then the lower
    /// threshold.
    fn beats(&self, other: &Option<Split>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain
                    || (self.gain == o.gain
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

pub(crate) struct Grower<'a> {
    data: &'a Dataset,
    resp: &'a Response<'a>,
    weights: Option<&'a [f64]>,
    params: &'a TreeParams,
    max_features: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    values: Vec<f64>,
    order: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

impl<'a> Grower<'a> {
    pub(crate) fn new(
        data: &'a Dataset,
        resp: &'a Response<'a>,
        weights: Option<&'a [f64]>,
        params: &'a TreeParams,
        seed: u64,
    ) -> Self {
        Self {
            data,
            resp,
            weights,
            params,
            max_features: params.max_features.resolve(data.n_features),
            rng: rng(seed),
            nodes: Vec::new(),
            values: Vec::new(),
            order: (0..data.n_features).collect(),
            scratch: Vec::new(),
        }
    }

    fn w(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    pub(crate) fn grow(mut self, mut idx: Vec<usize>, class_codes: Vec<u32>) -> Tree {
        self.build(&mut idx, 0);
        Tree {
            nodes: self.nodes,
            n_outputs: self.resp.n_outputs(),
            values: self.values,
            class_codes,
        }
    }

    fn stats(&self, idx: &[usize]) -> (Acc, bool) {
        let mut acc = Acc::empty(self.resp);
        for &i in idx {
            acc.add(self.resp, i, self.w(i));
        }
        let pure = match (&acc, self.resp) {
            (Acc::Class { counts, .. }, _) => counts.iter().filter(|&&c| c > 0.0).count() <= 1,
            (Acc::Value { .. }, Response::Value(y)) => {
                let first = y[idx[0]];
                idx.iter().all(|&i| y[i] == first)
            }
            _ => unreachable!(),
        };
        (acc, pure)
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let (acc, pure) = self.stats(idx);
        let id = self.nodes.len();
        let w = acc.weight();
        self.nodes.push(Node {
            feature: -1,
            threshold: 0.0,
            left: -1,
            right: -1,
            impurity: if w > 0.0 { acc.weighted_impurity() / w } else { 0.0 },
            weight: w,
        });
        acc.leaf_values(&mut self.values);

        let p = self.params;
        if pure
            || depth >= p.max_depth
            || idx.len() < p.min_samples_split
            || idx.len() < 2 * p.min_samples_leaf
        {
            return id;
        }
        let Some(split) = self.find_split(idx, &acc) else {
            return id;
        };
        let mid = partition(idx, |i| self.data.value(i, split.feature) <= split.threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = split.feature as i32;
        node.threshold = split.threshold;
        node.left = left as i32;
        node.right = right as i32;
        id
    }

    fn find_split(&mut self, idx: &[usize], node: &Acc) -> Option<Split> {
        // Partial Fisher-Yates: features are visited in random order until
        // `max_features` non-constant ones have been tried.
        let nf = self.order.len();
        let parent = node.weighted_impurity();
        let mut best: Option<Split> = None;
        let mut tried = 0;
        for k in 0..nf {
            if tried >= self.max_features {
                break;
            }
            let j = self.rng.random_range(k..nf);
            self.order.swap(k, j);
            let f = self.order[k];
            let cand = match self.params.split_strategy {
                SplitStrategy::Best => self.best_threshold(idx, f, node, parent),
                SplitStrategy::Random => self.random_threshold(idx, f, node, parent),
            };
            match cand {
                Candidate::Constant => continue,
                Candidate::NoValid => tried += 1,
                Candidate::Found(s) => {
                    tried += 1;
                    if s.beats(&best) {
                        best = Some(s);
                    }
                }
            }
        }
        best
    }

    fn best_threshold(&mut self, idx: &[usize], f: usize, node: &Acc, parent: f64) -> Candidate {
        let mut scratch = std::mem::take(&mut self.scratch);
        scratch.clear();
        scratch.extend(idx.iter().map(|&i| (self.data.value(i, f), i)));
        scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
        let n = scratch.len();
        if scratch[0].0 == scratch[n - 1].0 {
            self.scratch = scratch;
            return Candidate::Constant;
        }
        let min_leaf = self.params.min_samples_leaf;
        let mut left = Acc::empty(self.resp);
        let mut best: Option<Split> = None;
        for p in 0..n - 1 {
            let (v, i) = scratch[p];
            left.add(self.resp, i, self.w(i));
            let next = scratch[p + 1].0;
            if v == next || p + 1 < min_leaf || n - p - 1 < min_leaf {
                continue;
            }
            let children = left.weighted_impurity() + node.complement_weighted_impurity(&left);
            let mut threshold = v + (next - v) / 2.0;
            if threshold >= next {
                threshold = v;
            }
            let s = Split {
                feature: f,
                threshold,
                gain: parent - children,
            };
            if s.beats(&best) {
                best = Some(s);
            }
        }
        self.scratch = scratch;
        best.map_or(Candidate::NoValid, Candidate::Found)
    }

    fn random_threshold(&mut self, idx: &[usize], f: usize, node: &Acc, parent: f64) -> Candidate {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &i in idx {
            let v = self.data.value(i, f);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !(hi > lo) {
            return Candidate::Constant;
        }
        let u: f64 = self.rng.random();
        let threshold = lo + u * (hi - lo);
        let mut left = Acc::empty(self.resp);
        let mut n_left = 0;
        for &i in idx {
            if self.data.value(i, f) <= threshold {
                left.add(self.resp, i, self.w(i));
                n_left += 1;
            }
        }
        let min_leaf = self.params.min_samples_leaf;
        if n_left < min_leaf || idx.len() - n_left < min_leaf {
            return Candidate::NoValid;
        }
        let children = left.weighted_impurity() + node.complement_weighted_impurity(&left);
        Candidate::Found(Split {
            feature: f,
            threshold,
            gain: parent - children,
        })
    }
}

enum Candidate {
    Constant,
    NoValid,
    Found(Split),
}

/// Reorder so rows satisfying `pred` come first; returns their count.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut lo = 0;
    let mut hi = idx.len();
    while lo < hi {
        if pred(idx[lo]) {
            lo += 1;
        } else {
            hi -= 1;
            idx.swap(lo, hi);
        }
    }
    lo
}

/// Fit a single tree on every row of `data`.
pub fn fit_cart(data: &Dataset, params: &TreeParams, rng_seed: u64) -> Result<Tree> {
    params.validate()?;
    let n = data.n_rows();
    if n == 0 {
        return Err(TreeError::NoRows);
    }
    if data.n_features == 0 {
        return Err(TreeError::NoFeatures);
    }
    if params.criterion != super::Criterion::for_task(data.target.task()) {
        return Err(TreeError::CriterionMismatch {
            criterion: params.criterion,
            task: data.target.task(),
        });
    }
    let (resp, codes) = Response::new(&data.target);
    Ok(Grower::new(data, &resp, None, params, rng_seed).grow((0..n).collect(), codes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{MaxFeatures, Task};

    fn xor() -> Dataset {
        Dataset::new(
            vec!["a".into(), "b".into()],
            &[vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]],
            Target::Classes(vec![0, 1, 1, 0]),
        )
    }

    #[test]
    fn xor_is_separated() {
        let d = xor();
        let t = fit_cart(&d, &TreeParams::new(Task::Classify), 0).unwrap();
        for i in 0..4 {
            let Target::Classes(y) = &d.target else { unreachable!() };
            assert_eq!(t.predict_class(d.row(i)), y[i]);
        }
        assert_eq!(t.depth(), 2);
        // zero-gain tie at the root goes to the lower feature
        assert_eq!(t.nodes[0].feature, 0);
        assert_eq!(t.nodes[0].threshold, 0.5);
    }

    #[test]
    fn depth_one_cannot_fit_xor() {
        // a brute-force count over every stump on XOR: at best 2 of 4 right
        let d = xor();
        let t = fit_cart(&d, &TreeParams::new(Task::Classify).with_max_depth(1), 0).unwrap();
        let correct = (0..4)
            .filter(|&i| {
                let Target::Classes(y) = &d.target else { unreachable!() };
                t.predict_class(d.row(i)) == y[i]
            })
            .count();
        assert_eq!(correct, 2);
    }

    #[test]
    fn single_row_and_pure_sets_are_leaves() {
        let d = Dataset::new(vec!["a".into()], &[vec![3.0]], Target::Values(vec![7.5]));
        let t = fit_cart(&d, &TreeParams::new(Task::Regress), 1).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict_value(&[100.0]), 7.5);

        let d = Dataset::new(
            vec!["a".into()],
            &[vec![1.0], vec![2.0], vec![3.0]],
            Target::Classes(vec![2, 2, 2]),
        );
        let t = fit_cart(&d, &TreeParams::new(Task::Classify), 1).unwrap();
        assert_eq!(t.depth(), 0);
        assert_eq!(t.predict_class(&[9.0]), 2);
    }

    #[test]
    fn zero_rows_is_an_error() {
        let d = Dataset::new(vec!["a".into()], &[], Target::Values(vec![]));
        assert_eq!(fit_cart(&d, &TreeParams::new(Task::Regress), 1), Err(TreeError::NoRows));
    }

    #[test]
    fn leaf_constraint_is_enforced() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..40).map(|i| (i % 7) as f64).collect();
        let d = Dataset::new(vec!["a".into()], &rows, Target::Values(y));
        let mut p = TreeParams::new(Task::Regress);
        p.min_samples_leaf = 5;
        for strategy in [SplitStrategy::Best, SplitStrategy::Random] {
            p.split_strategy = strategy;
            let t = fit_cart(&d, &p, 3).unwrap();
            for n in t.nodes.iter().filter(|n| n.is_leaf()) {
                assert!(n.weight >= 5.0);
            }
        }
    }

    #[test]
    fn regression_fits_training_targets() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * 7 % 11) as f64]).collect();
        let y: Vec<f64> = (0..50).map(|i| ((i * 13) % 17) as f64 * 0.5).collect();
        let d = Dataset::new(vec!["a".into(), "b".into()], &rows, Target::Values(y.clone()));
        let mut p = TreeParams::new(Task::Regress);
        p.max_features = MaxFeatures::Count(1);
        p.split_strategy = SplitStrategy::Random;
        let t = fit_cart(&d, &p, 9).unwrap();
        for (i, yi) in y.iter().enumerate() {
            assert_eq!(t.predict_value(d.row(i)), *yi);
        }
    }
}
