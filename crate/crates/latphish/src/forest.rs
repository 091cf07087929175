//! Bagged decision-tree ensemble trained from scratch: bootstrap resampling,
//! per-node feature subsampling, thresholds minimizing weighted Gini
//! impurity, impurity-based feature importances, and a k-fold
//! cross-validated grid search for hyperparameter selection.
//!
//! Training is deterministic for a given (data, config): every tree draws
//! from its own RNG seeded as `rng_seed + tree_index`, and split search
//! iterates features and thresholds in a fixed order.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Default seed used when a caller does not supply one explicitly.
pub const DEFAULT_SEED: u64 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Phish,
    Benign,
}

/// One training example: the feature vector of an email plus its label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: Label,
    pub email_id: String,
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Benign examples sampled per phish example.
    pub downsample_ratio: usize,
    pub rng_seed: u64,
    /// Features tried per split; None means ceil(sqrt(d)).
    #[serde(default)]
    pub features_per_split: Option<usize>,
}

impl TrainConfig {
    /// The production configuration shipped as the default: 64 trees, depth
    /// 8, minimum leaf size 4, 200 benign per phish.
    pub fn production_default(seed: u64) -> Self {
        TrainConfig {
            n_trees: 64,
            max_depth: 8,
            min_leaf: 4,
            downsample_ratio: 200,
            rng_seed: seed,
            features_per_split: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 || self.downsample_ratio == 0
        {
            return Err(Error::Config(
                "n_trees, max_depth, min_leaf, downsample_ratio must be positive".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::Config("features_per_split must be positive".into()));
        }
        Ok(())
    }

    fn split_features(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .min(n_features)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
    Leaf {
        phish_fraction: f64,
        samples: usize,
    },
}

impl Node {
    fn traverse(&self, row: &[f64]) -> f64 {
        match self {
            Node::Leaf { phish_fraction, .. } => *phish_fraction,
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.traverse(row)
                } else {
                    right.traverse(row)
                }
            }
        }
    }

    fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A trained ensemble with normalized impurity-based feature importances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    version: u32,
    n_features: usize,
    config: TrainConfig,
    importances: Vec<f64>,
    trees: Vec<Node>,
}

impl Forest {
    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn trees(&self) -> &[Node] {
        &self.trees
    }

    /// Per-feature importance scores in [0, 1] summing to 1.
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn max_tree_depth(&self) -> usize {
        self.trees.iter().map(Node::depth).max().unwrap_or(0)
    }

    /// Mean leaf phish fraction across trees; phish iff score >= 0.5.
    pub fn predict_row(&self, row: &[f64]) -> (Label, f64) {
        let score = self
            .trees
            .iter()
            .map(|t| t.traverse(row))
            .sum::<f64>()
            / self.trees.len() as f64;
        let label = if score >= 0.5 { Label::Phish } else { Label::Benign };
        (label, score)
    }

    pub fn predict(&self, fv: &FeatureVector) -> (Label, f64) {
        self.predict_row(&fv.as_array())
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let forest: Forest =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("bad model file: {e}")))?;
        if forest.version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model version {}",
                forest.version
            )));
        }
        Ok(forest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

// ---------------------------------------------------------------------------
// Downsampling
// ---------------------------------------------------------------------------

/// All phish plus `min(ratio * |phish|, |pool|)` benign examples drawn
/// uniformly without replacement; deterministic per seed.
pub fn downsample(
    phish: &[LabeledExample],
    benign_pool: &[LabeledExample],
    ratio: usize,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    if phish.is_empty() {
        return Err(Error::Train("cannot train without phish examples".into()));
    }
    if benign_pool.is_empty() {
        return Err(Error::Train("benign pool is empty".into()));
    }
    let take = (ratio * phish.len()).min(benign_pool.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..benign_pool.len()).collect();
    indices.shuffle(&mut rng);
    indices.truncate(take);
    indices.sort_unstable();
    let mut out: Vec<LabeledExample> = phish.to_vec();
    out.extend(indices.into_iter().map(|i| benign_pool[i].clone()));
    Ok(out)
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

struct TreeBuild<'a> {
    x: &'a [Vec<f64>],
    y: &'a [bool], // true = phish
    min_leaf: usize,
    max_depth: usize,
    n_split_features: usize,
    n_root: usize,
    importances: Vec<f64>,
}

impl TreeBuild<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> Node {
        let n = rows.len();
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        let node_gini = gini(pos, n);
        let leaf = |pos: usize, n: usize| Node::Leaf {
            phish_fraction: pos as f64 / n as f64,
            samples: n,
        };
        if depth >= self.max_depth || n < 2 * self.min_leaf || pos == 0 || pos == n {
            return leaf(pos, n);
        }

        let d = self.x[0].len();
        let mut feats: Vec<usize> = (0..d).collect();
        for i in 0..self.n_split_features.min(d) {
            let j = rng.gen_range(i..d);
            feats.swap(i, j);
        }
        let sampled: Vec<usize> = {
            let mut s = feats[..self.n_split_features.min(d)].to_vec();
            s.sort_unstable();
            s
        };

        let mut scratch: Vec<(f64, bool)> = Vec::with_capacity(n);
        let search = |f: usize, scratch: &mut Vec<(f64, bool)>| -> Option<(f64, usize, f64)> {
            scratch.clear();
            scratch.extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut found: Option<(f64, usize, f64)> = None;
            let mut left_n = 0usize;
            let mut left_pos = 0usize;
            for i in 0..n - 1 {
                left_n += 1;
                if scratch[i].1 {
                    left_pos += 1;
                }
                if scratch[i].0 == scratch[i + 1].0 {
                    continue;
                }
                let right_n = n - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let w = (left_n as f64 * gini(left_pos, left_n)
                    + right_n as f64 * gini(pos - left_pos, right_n))
                    / n as f64;
                // Threshold at the greatest left-side value (not the
                // midpoint): routing `x <= t` then depends only on the
                // ordering of feature values, so predictions survive any
                // strictly increasing per-feature transform.
                let threshold = scratch[i].0;
                if found.map_or(true, |(bw, _, _)| w < bw) {
                    found = Some((w, f, threshold));
                }
            }
            found
        };

        let mut best: Option<(f64, usize, f64)> = None;
        for &f in &sampled {
            if let Some(cand) = search(f, &mut scratch) {
                if best.map_or(true, |(bw, bf, _)| (cand.0, cand.1) < (bw, bf)) {
                    best = Some(cand);
                }
            }
        }
        if best.is_none() {
            // None of the sampled features admits a valid partition; keep
            // inspecting the remaining features until one does.
            for f in (0..d).filter(|f| !sampled.contains(f)) {
                if let Some(cand) = search(f, &mut scratch) {
                    best = Some(cand);
                    break;
                }
            }
        }

        let Some((w, feature, threshold)) = best else {
            return leaf(pos, n);
        };

        self.importances[feature] += (n as f64 / self.n_root as f64) * (node_gini - w);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&r| self.x[r][feature] <= threshold);
        let left = self.build(left_rows, depth + 1, rng);
        let right = self.build(right_rows, depth + 1, rng);
        Node::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Train a forest on a raw feature matrix. `y[i]` is true for phish.
pub fn train_matrix(x: &[Vec<f64>], y: &[bool], config: &TrainConfig) -> Result<Forest> {
    config.validate()?;
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Train("empty or mismatched training data".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Train("inconsistent feature dimensions".into()));
    }
    let pos = y.iter().filter(|&&v| v).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::Train(
            "training data must contain both classes".into(),
        ));
    }
    let n = x.len();
    let n_split_features = config.split_features(d);

    let results: Vec<(Node, Vec<f64>)> = (0..config.n_trees)
        .into_par_iter()
        .map(|tree_index| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(config.rng_seed.wrapping_add(tree_index as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut build = TreeBuild {
                x,
                y,
                min_leaf: config.min_leaf,
                max_depth: config.max_depth,
                n_split_features,
                n_root: rows.len(),
                importances: vec![0.0; d],
            };
            let root = build.build(rows, 0, &mut rng);
            (root, build.importances)
        })
        .collect();

    let mut importances = vec![0.0; d];
    let mut trees = Vec::with_capacity(config.n_trees);
    for (root, imp) in results {
        for (acc, v) in importances.iter_mut().zip(imp) {
            *acc += v;
        }
        trees.push(root);
    }
    let total: f64 = importances.iter().sum();
    if total > 0.0 {
        for v in &mut importances {
            *v /= total;
        }
    }
    Ok(Forest {
        version: MODEL_FORMAT_VERSION,
        n_features: d,
        config: config.clone(),
        importances,
        trees,
    })
}

/// Train a forest on labeled feature vectors.
pub fn train(data: &[LabeledExample], config: &TrainConfig) -> Result<Forest> {
    let x: Vec<Vec<f64>> = data.iter().map(|e| e.features.as_array().to_vec()).collect();
    let y: Vec<bool> = data.iter().map(|e| e.label == Label::Phish).collect();
    train_matrix(&x, &y, config)
}

/// Grow one unbagged tree on the full dataset (no bootstrap). Used to check
/// tree-level properties in isolation from resampling.
pub fn train_tree_full(
    x: &[Vec<f64>],
    y: &[bool],
    max_depth: usize,
    min_leaf: usize,
    seed: u64,
) -> Result<Node> {
    if x.is_empty() || x.len() != y.len() {
        return Err(Error::Train("empty or mismatched training data".into()));
    }
    let d = x[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = TreeBuild {
        x,
        y,
        min_leaf,
        max_depth,
        n_split_features: d,
        n_root: x.len(),
        importances: vec![0.0; d],
    };
    Ok(build.build((0..x.len()).collect(), 0, &mut rng))
}

// ---------------------------------------------------------------------------
// ROC-AUC and grid search
// ---------------------------------------------------------------------------

/// Rank-based ROC-AUC with midrank tie handling. Returns None when either
/// class is absent.
pub fn roc_auc(scored: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scored.iter().filter(|(_, y)| *y).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.total_cmp(&scored[b].0));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks are 1-based; ties share the average rank of their block.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored[idx].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// Hyperparameter ranges for grid search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainGrid {
    pub n_trees: Vec<usize>,
    pub max_depth: Vec<usize>,
    pub min_leaf: Vec<usize>,
    pub downsample_ratio: Vec<usize>,
}

impl TrainGrid {
    /// The full tuning grid: trees 50-500 by 50, depth 10-100 by 10,
    /// min leaf {1,2,4,8}, ratio {10,50,100,200}.
    pub fn full_default() -> Self {
        TrainGrid {
            n_trees: (1..=10).map(|i| i * 50).collect(),
            max_depth: (1..=10).map(|i| i * 10).collect(),
            min_leaf: vec![1, 2, 4, 8],
            downsample_ratio: vec![10, 50, 100, 200],
        }
    }

    /// Grid points in deterministic (trees, depth, leaf, ratio) order.
    pub fn points(&self, seed: u64) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &t in &self.n_trees {
            for &d in &self.max_depth {
                for &l in &self.min_leaf {
                    for &r in &self.downsample_ratio {
                        out.push(TrainConfig {
                            n_trees: t,
                            max_depth: d,
                            min_leaf: l,
                            downsample_ratio: r,
                            rng_seed: seed,
                            features_per_split: None,
                        });
                    }
                }
            }
        }
        out
    }
}

/// Preference order for AUC ties: fewer trees, then smaller depth, then
/// larger min leaf, then smaller ratio.
fn cheaper(a: &TrainConfig, b: &TrainConfig) -> bool {
    (a.n_trees, a.max_depth, std::cmp::Reverse(a.min_leaf), a.downsample_ratio)
        < (b.n_trees, b.max_depth, std::cmp::Reverse(b.min_leaf), b.downsample_ratio)
}

/// Stratified k-fold cross-validated grid search maximizing mean ROC-AUC.
/// Requires at least `k` phish examples so every fold holds some attacks.
pub fn grid_search_cv(
    data: &[LabeledExample],
    grid: &TrainGrid,
    k: usize,
    seed: u64,
) -> Result<TrainConfig> {
    if k < 2 {
        return Err(Error::Config("grid search needs k >= 2 folds".into()));
    }
    let phish_idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].label == Label::Phish).collect();
    let benign_idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].label == Label::Benign).collect();
    if phish_idx.len() < k {
        return Err(Error::Train(format!(
            "need at least {k} phish examples for {k}-fold search, have {}",
            phish_idx.len()
        )));
    }
    if benign_idx.len() < k {
        return Err(Error::Train(format!(
            "need at least {k} benign examples for {k}-fold search, have {}",
            benign_idx.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phish_sh = phish_idx.clone();
    let mut benign_sh = benign_idx.clone();
    phish_sh.shuffle(&mut rng);
    benign_sh.shuffle(&mut rng);
    let fold_of = |shuffled: &[usize]| -> Vec<(usize, usize)> {
        shuffled.iter().enumerate().map(|(i, &idx)| (idx, i % k)).collect()
    };
    let mut fold = vec![0usize; data.len()];
    for (idx, f) in fold_of(&phish_sh).into_iter().chain(fold_of(&benign_sh)) {
        fold[idx] = f;
    }

    let mut best: Option<(f64, TrainConfig)> = None;
    for point in grid.points(seed) {
        let mut auc_sum = 0.0;
        let mut folds_used = 0usize;
        for f in 0..k {
            let train_phish: Vec<LabeledExample> = phish_idx
                .iter()
                .filter(|&&i| fold[i] != f)
                .map(|&i| data[i].clone())
                .collect();
            let train_benign: Vec<LabeledExample> = benign_idx
                .iter()
                .filter(|&&i| fold[i] != f)
                .map(|&i| data[i].clone())
                .collect();
            let sampled = downsample(
                &train_phish,
                &train_benign,
                point.downsample_ratio,
                seed.wrapping_add(f as u64),
            )?;
            let cfg = TrainConfig {
                rng_seed: seed.wrapping_add(97 * f as u64),
                ..point.clone()
            };
            let forest = train(&sampled, &cfg)?;
            let scored: Vec<(f64, bool)> = (0..data.len())
                .filter(|&i| fold[i] == f)
                .map(|i| {
                    let (_, s) = forest.predict(&data[i].features);
                    (s, data[i].label == Label::Phish)
                })
                .collect();
            if let Some(auc) = roc_auc(&scored) {
                auc_sum += auc;
                folds_used += 1;
            }
        }
        if folds_used == 0 {
            continue;
        }
        let mean_auc = auc_sum / folds_used as f64;
        let better = match &best {
            None => true,
            Some((best_auc, best_cfg)) => {
                mean_auc > *best_auc || (mean_auc == *best_auc && cheaper(&point, best_cfg))
            }
        };
        if better {
            best = Some((mean_auc, point));
        }
    }
    best.map(|(_, cfg)| cfg)
        .ok_or_else(|| Error::Train("grid produced no evaluable points".into()))
}

/// Duplicate-feature-vector consistency check used by tests and the
/// synthetic generator: true when no two identical rows carry different
/// labels.
pub fn is_consistent(x: &[Vec<f64>], y: &[bool]) -> bool {
    let mut seen: HashSet<(Vec<u64>, bool)> = HashSet::new();
    let mut keys: HashSet<Vec<u64>> = HashSet::new();
    for (row, &label) in x.iter().zip(y) {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        if keys.contains(&key) && !seen.contains(&(key.clone(), label)) {
            return false;
        }
        keys.insert(key.clone());
        seen.insert((key, label));
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(n: u32, lik: f64, kw: bool, g: u64, l: u32) -> FeatureVector {
        FeatureVector {
            num_recipients: n,
            recipient_likelihood: lik,
            phishy_keyword: kw,
            global_url_rep: g,
            local_url_rep: l,
        }
    }

    fn example(id: &str, label: Label, g: u64) -> LabeledExample {
        LabeledExample {
            features: fv(1, 0.5, false, g, 3),
            label,
            email_id: id.into(),
        }
    }

    fn separable_1d(n_per_class: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_per_class {
            x.push(vec![i as f64 / n_per_class as f64 * 5.0]);
            y.push(false);
            x.push(vec![5.0 + 1.0 + i as f64]);
            y.push(true);
        }
        (x, y)
    }

    #[test]
    fn separable_single_tree_is_perfect() {
        let (x, y) = separable_1d(20);
        let cfg = TrainConfig {
            n_trees: 1,
            max_depth: 4,
            min_leaf: 1,
            downsample_ratio: 1,
            rng_seed: 3,
            features_per_split: Some(1),
        };
        let forest = train_matrix(&x, &y, &cfg).unwrap();
        for (row, want) in x.iter().zip(&y) {
            let (label, _) = forest.predict_row(row);
            assert_eq!(label == Label::Phish, *want);
        }
    }

    #[test]
    fn importances_sum_to_one() {
        let (x, y) = separable_1d(30);
        let x2: Vec<Vec<f64>> = x
            .iter()
            .enumerate()
            .map(|(i, r)| vec![r[0], (i % 7) as f64, (i % 3) as f64])
            .collect();
        let cfg = TrainConfig {
            n_trees: 25,
            max_depth: 6,
            min_leaf: 2,
            downsample_ratio: 1,
            rng_seed: 11,
            features_per_split: None,
        };
        let forest = train_matrix(&x2, &y, &cfg).unwrap();
        let sum: f64 = forest.importances().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "importances sum {sum}");
        assert!(forest.importances().iter().all(|&v| v >= 0.0));
        // The separating feature carries the weight.
        assert!(forest.importances()[0] > 0.9);
    }

    #[test]
    fn depth_and_leaf_limits_hold() {
        let (x, y) = separable_1d(50);
        let cfg = TrainConfig {
            n_trees: 10,
            max_depth: 2,
            min_leaf: 5,
            downsample_ratio: 1,
            rng_seed: 5,
            features_per_split: None,
        };
        let forest = train_matrix(&x, &y, &cfg).unwrap();
        assert!(forest.max_tree_depth() <= 2);
        fn check_leaves(node: &Node, min_leaf: usize) {
            match node {
                Node::Leaf { samples, .. } => assert!(*samples >= min_leaf),
                Node::Split { left, right, .. } => {
                    check_leaves(left, min_leaf);
                    check_leaves(right, min_leaf);
                }
            }
        }
        for t in forest.trees() {
            check_leaves(t, cfg.min_leaf);
        }
    }

    #[test]
    fn single_class_data_errors() {
        let x = vec![vec![1.0], vec![2.0]];
        let y = vec![true, true];
        assert!(train_matrix(&x, &y, &TrainConfig::production_default(1)).is_err());
    }

    #[test]
    fn downsample_counts_and_determinism() {
        let phish: Vec<LabeledExample> =
            (0..2).map(|i| example(&format!("p{i}"), Label::Phish, 10_000_000)).collect();
        let pool: Vec<LabeledExample> =
            (0..1000).map(|i| example(&format!("b{i}"), Label::Benign, 100)).collect();
        let sampled = downsample(&phish, &pool, 200, 9).unwrap();
        assert_eq!(sampled.len(), 2 + 400);
        let again = downsample(&phish, &pool, 200, 9).unwrap();
        assert_eq!(sampled, again);
        // Pool smaller than ratio * phish: take the whole pool.
        let small_pool = &pool[..100];
        let clamped = downsample(&phish, small_pool, 200, 9).unwrap();
        assert_eq!(clamped.len(), 2 + 100);
        assert!(downsample(&[], &pool, 200, 9).is_err());
    }

    #[test]
    fn prediction_tie_goes_to_phish() {
        // Two stump trees voting 1.0 and 0.0 average to exactly 0.5.
        let forest = Forest {
            version: MODEL_FORMAT_VERSION,
            n_features: 1,
            config: TrainConfig::production_default(1),
            importances: vec![1.0],
            trees: vec![
                Node::Leaf { phish_fraction: 1.0, samples: 4 },
                Node::Leaf { phish_fraction: 0.0, samples: 4 },
            ],
        };
        let (label, score) = forest.predict_row(&[0.0]);
        assert_eq!(score, 0.5);
        assert_eq!(label, Label::Phish);
        let all_phish = Forest {
            trees: vec![Node::Leaf { phish_fraction: 1.0, samples: 4 }; 3],
            ..forest
        };
        let (label, score) = all_phish.predict_row(&[0.0]);
        assert_eq!(score, 1.0);
        assert_eq!(label, Label::Phish);
    }

    #[test]
    fn identical_seed_identical_model_bytes() {
        let (x, y) = separable_1d(25);
        let cfg = TrainConfig {
            n_trees: 12,
            max_depth: 5,
            min_leaf: 2,
            downsample_ratio: 1,
            rng_seed: 1234,
            features_per_split: None,
        };
        let a = train_matrix(&x, &y, &cfg).unwrap().to_json_string();
        let b = train_matrix(&x, &y, &cfg).unwrap().to_json_string();
        assert_eq!(a, b);
    }

    #[test]
    fn save_load_roundtrip_is_bit_stable() {
        let (x, y) = separable_1d(25);
        let cfg = TrainConfig::production_default(7);
        let forest = train_matrix(&x, &y, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        forest.save(&path).unwrap();
        let loaded = Forest::load(&path).unwrap();
        assert_eq!(forest, loaded);
        assert_eq!(forest.to_json_string(), loaded.to_json_string());
    }

    #[test]
    fn unbounded_tree_memorizes_consistent_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut seen: std::collections::HashMap<(u64, u64), bool> = std::collections::HashMap::new();
        let mut x: Vec<Vec<f64>> = Vec::new();
        let mut y = Vec::new();
        while x.len() < 100 {
            let row = vec![(rng.gen_range(0..12)) as f64, (rng.gen_range(0..12)) as f64];
            let label = rng.gen_bool(0.4);
            let key = (row[0].to_bits(), row[1].to_bits());
            // Keep the data consistent: duplicate points keep their first label.
            let label = *seen.entry(key).or_insert(label);
            x.push(row);
            y.push(label);
        }
        assert!(is_consistent(&x, &y));
        let tree = train_tree_full(&x, &y, usize::MAX, 1, 0).unwrap();
        for (row, want) in x.iter().zip(&y) {
            let score = tree_score(&tree, row);
            assert_eq!(score >= 0.5, *want, "row {row:?}");
            assert!(score == 0.0 || score == 1.0, "leaf should be pure");
        }
    }

    fn tree_score(node: &Node, row: &[f64]) -> f64 {
        match node {
            Node::Leaf { phish_fraction, .. } => *phish_fraction,
            Node::Split { feature, threshold, left, right } => {
                if row[*feature] <= *threshold {
                    tree_score(left, row)
                } else {
                    tree_score(right, row)
                }
            }
        }
    }

    #[test]
    fn auc_midranks_and_bounds() {
        let perfect = vec![(0.9, true), (0.8, true), (0.2, false), (0.1, false)];
        assert_eq!(roc_auc(&perfect), Some(1.0));
        let inverted = vec![(0.1, true), (0.9, false)];
        assert_eq!(roc_auc(&inverted), Some(0.0));
        let tied = vec![(0.5, true), (0.5, false)];
        assert_eq!(roc_auc(&tied), Some(0.5));
        assert_eq!(roc_auc(&[(0.5, true)]), None);
    }

    #[test]
    fn trained_forest_auc_beats_constant() {
        let (x, y) = separable_1d(20);
        let cfg = TrainConfig {
            n_trees: 8,
            max_depth: 4,
            min_leaf: 2,
            downsample_ratio: 1,
            rng_seed: 21,
            features_per_split: None,
        };
        let forest = train_matrix(&x, &y, &cfg).unwrap();
        let scored: Vec<(f64, bool)> = x
            .iter()
            .zip(&y)
            .map(|(r, &t)| (forest.predict_row(r).1, t))
            .collect();
        assert!(roc_auc(&scored).unwrap() >= 0.5);
    }

    #[test]
    fn monotone_feature_transform_preserves_predictions() {
        let (x, y) = separable_1d(20);
        let cfg = TrainConfig {
            n_trees: 16,
            max_depth: 6,
            min_leaf: 1,
            downsample_ratio: 1,
            rng_seed: 77,
            features_per_split: Some(1),
        };
        let f1 = train_matrix(&x, &y, &cfg).unwrap();
        // Strictly increasing transform applied consistently: x -> x^3 + 2x.
        let tx: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().map(|v| v * v * v + 2.0 * v).collect())
            .collect();
        let f2 = train_matrix(&tx, &y, &cfg).unwrap();
        for (row, trow) in x.iter().zip(&tx) {
            assert_eq!(f1.predict_row(row), f2.predict_row(trow));
        }
    }

    #[test]
    fn grid_single_point_and_tie_break() {
        let phish: Vec<LabeledExample> =
            (0..6).map(|i| example(&format!("p{i}"), Label::Phish, 10_000_000)).collect();
        let benign: Vec<LabeledExample> =
            (0..60).map(|i| example(&format!("b{i}"), Label::Benign, 50 + i as u64)).collect();
        let data: Vec<LabeledExample> = phish.into_iter().chain(benign).collect();

        let single = TrainGrid {
            n_trees: vec![5],
            max_depth: vec![3],
            min_leaf: vec![2],
            downsample_ratio: vec![10],
        };
        let got = grid_search_cv(&data, &single, 3, 9).unwrap();
        assert_eq!((got.n_trees, got.max_depth, got.min_leaf, got.downsample_ratio), (5, 3, 2, 10));

        // Perfectly separable data gives every point AUC 1.0; the tie rule
        // picks fewer trees, smaller depth, larger leaf, smaller ratio.
        let tie = TrainGrid {
            n_trees: vec![10, 5],
            max_depth: vec![4, 2],
            min_leaf: vec![1, 2],
            downsample_ratio: vec![20, 10],
        };
        let got = grid_search_cv(&data, &tie, 3, 9).unwrap();
        assert_eq!((got.n_trees, got.max_depth, got.min_leaf, got.downsample_ratio), (5, 2, 2, 10));
    }

    #[test]
    fn grid_requires_enough_phish() {
        let data = vec![
            example("p0", Label::Phish, 10_000_000),
            example("b0", Label::Benign, 5),
            example("b1", Label::Benign, 6),
        ];
        let grid = TrainGrid {
            n_trees: vec![2],
            max_depth: vec![2],
            min_leaf: vec![1],
            downsample_ratio: vec![10],
        };
        assert!(grid_search_cv(&data, &grid, 3, 1).is_err());
    }

    #[test]
    fn full_grid_has_expected_shape() {
        let g = TrainGrid::full_default();
        assert_eq!(g.points(0).len(), 10 * 10 * 4 * 4);
        assert_eq!(g.n_trees.first(), Some(&50));
        assert_eq!(g.n_trees.last(), Some(&500));
        assert_eq!(g.max_depth.last(), Some(&100));
    }
}
