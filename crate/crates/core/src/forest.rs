//! Random-forest classifier: bootstrap-bagged CART trees with Gini splits.
//!
//! Each tree draws its randomness from a ChaCha stream keyed by the master
//! seed and the tree index, so trees can be grown in any order (or
//! concurrently) and the ensemble comes out identical.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;

pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label {label} is out of range for {n_classes} classes")]
    LabelOutOfRange { label: usize, n_classes: usize },
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid forest parameters: {0}")]
    InvalidParams(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Dense row-major feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, ForestError> {
        if data.len() != rows * cols {
            return Err(ForestError::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, ForestError> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(ForestError::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// floor(sqrt(n_features)), at least 1.
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            MaxFeatures::Sqrt => (n_features as f64).sqrt().floor() as usize,
            MaxFeatures::All => n_features,
            MaxFeatures::Fixed(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 2400,
            max_features: MaxFeatures::Sqrt,
            min_samples_leaf: 1,
            bootstrap: true,
            max_depth: None,
        }
    }
}

impl ForestParams {
    /// Desk-scale profile used by tests and quick experiments: 100 trees.
    pub fn test_profile() -> Self {
        ForestParams {
            n_trees: 100,
            ..Self::default()
        }
    }

    fn validate(&self, n_features: usize) -> Result<(), ForestError> {
        if self.n_trees == 0 {
            return Err(ForestError::InvalidParams("n_trees must be at least 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(ForestError::InvalidParams("min_samples_leaf must be at least 1".into()));
        }
        if let MaxFeatures::Fixed(k) = self.max_features {
            if k == 0 || k > n_features {
                return Err(ForestError::InvalidParams(format!(
                    "max_features {k} outside 1..={n_features}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TreeNode {
    /// Samples with `x[feature_index] <= threshold` go left.
    Split {
        feature_index: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        distribution: Vec<f64>,
    },
}

/// A decision tree stored as an arena; the root is node 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_distribution(&self, x: &[f64]) -> &[f64] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Split {
                    feature_index,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature_index] <= *threshold { *left } else { *right },
                TreeNode::Leaf { distribution } => return distribution,
            }
        }
    }

    pub fn depth(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let TreeNode::Split { left, right, .. } = self.nodes[i] {
                stack.push((left, d + 1));
                stack.push((right, d + 1));
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    trees: Vec<Tree>,
    n_features: usize,
    n_classes: usize,
    params: ForestParams,
    master_seed: u64,
}

pub fn train_forest(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel, ForestError> {
    train_forest_with(x, y, n_classes, params, seed, Execution::default())
}

pub fn train_forest_with(
    x: &FeatureMatrix,
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
    exec: Execution,
) -> Result<ForestModel, ForestError> {
    if x.rows() == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if y.len() != x.rows() {
        return Err(ForestError::DimensionMismatch {
            expected: x.rows(),
            got: y.len(),
        });
    }
    if x.cols() == 0 {
        return Err(ForestError::InvalidParams("feature matrix has no columns".into()));
    }
    if let Some(&label) = y.iter().find(|&&l| l >= n_classes) {
        return Err(ForestError::LabelOutOfRange { label, n_classes });
    }
    params.validate(x.cols())?;

    let trees = exec.map_range(params.n_trees, |t| {
        let mut rng = tree_rng(seed, t);
        grow_tree(x, y, n_classes, params, &mut rng)
    });
    Ok(ForestModel {
        trees,
        n_features: x.cols(),
        n_classes,
        params: params.clone(),
        master_seed: seed,
    })
}

fn tree_rng(master_seed: u64, tree_index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(tree_index as u64);
    rng
}

/// Row indices a tree is grown on; draws from `rng` first so it can be replayed.
fn training_sample(rng: &mut ChaCha8Rng, n: usize, bootstrap: bool) -> Vec<usize> {
    if bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    }
}

struct Frame {
    node: usize,
    lo: usize,
    hi: usize,
    depth: usize,
}

struct BestSplit {
    score: f64,
    feature: usize,
    threshold: f64,
}

fn grow_tree(x: &FeatureMatrix, y: &[usize], n_classes: usize, params: &ForestParams, rng: &mut ChaCha8Rng) -> Tree {
    let n = x.rows();
    let d = x.cols();
    let mut samples = training_sample(rng, n, params.bootstrap);
    let k = params.max_features.resolve(d);
    let min_leaf = params.min_samples_leaf;

    let mut nodes = vec![TreeNode::Leaf {
        distribution: Vec::new(),
    }];
    let mut stack = vec![Frame {
        node: 0,
        lo: 0,
        hi: samples.len(),
        depth: 0,
    }];
    let mut features: Vec<usize> = (0..d).collect();
    let mut column: Vec<(f64, usize)> = Vec::with_capacity(n);
    let mut counts = vec![0usize; n_classes];
    let mut left = vec![0usize; n_classes];

    while let Some(Frame { node, lo, hi, depth }) = stack.pop() {
        let m = hi - lo;
        counts.iter_mut().for_each(|c| *c = 0);
        for &i in &samples[lo..hi] {
            counts[y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = params.max_depth.is_some_and(|md| depth >= md);

        let mut best: Option<BestSplit> = None;
        if !pure && !depth_capped && m >= 2 * min_leaf {
            // features drawn without replacement; constant ones do not count
            let mut evaluated = 0;
            for j in 0..d {
                if evaluated == k {
                    break;
                }
                let pick = rng.random_range(j..d);
                features.swap(j, pick);
                let f = features[j];

                column.clear();
                column.extend(samples[lo..hi].iter().map(|&i| (x.get(i, f), y[i])));
                column.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
                if column[0].0 == column[m - 1].0 {
                    continue;
                }
                evaluated += 1;

                left.iter_mut().for_each(|c| *c = 0);
                for s in 0..m - 1 {
                    left[column[s].1] += 1;
                    let (a, b) = (column[s].0, column[s + 1].0);
                    let n_left = s + 1;
                    if a == b || n_left < min_leaf || m - n_left < min_leaf {
                        continue;
                    }
                    let score = split_score(&left, &counts, n_left, m);
                    let threshold = midpoint(a, b);
                    let better = match &best {
                        None => true,
                        Some(bs) => {
                            score > bs.score || (score == bs.score && (f, threshold) < (bs.feature, bs.threshold))
                        }
                    };
                    if better {
                        best = Some(BestSplit {
                            score,
                            feature: f,
                            threshold,
                        });
                    }
                }
            }
        }

        match best {
            None => {
                nodes[node] = TreeNode::Leaf {
                    distribution: counts.iter().map(|&c| c as f64 / m as f64).collect(),
                };
            }
            Some(BestSplit { feature, threshold, .. }) => {
                // partition samples[lo..hi] so the left child comes first
                let mut mid = lo;
                for s in lo..hi {
                    if x.get(samples[s], feature) <= threshold {
                        samples.swap(s, mid);
                        mid += 1;
                    }
                }
                let l = nodes.len();
                nodes.push(TreeNode::Leaf {
                    distribution: Vec::new(),
                });
                nodes.push(TreeNode::Leaf {
                    distribution: Vec::new(),
                });
                nodes[node] = TreeNode::Split {
                    feature_index: feature,
                    threshold,
                    left: l,
                    right: l + 1,
                };
                stack.push(Frame {
                    node: l + 1,
                    lo: mid,
                    hi,
                    depth: depth + 1,
                });
                stack.push(Frame {
                    node: l,
                    lo,
                    hi: mid,
                    depth: depth + 1,
                });
            }
        }
    }
    Tree { nodes }
}

/// Larger is better: sum over children of (sum_c n_c^2) / n_child, which
/// orders splits the same way as the weighted Gini impurity decrease.
fn split_score(left: &[usize], total: &[usize], n_left: usize, n: usize) -> f64 {
    let n_right = n - n_left;
    let mut l = 0u64;
    let mut r = 0u64;
    for (&a, &t) in left.iter().zip(total) {
        let b = (t - a) as u64;
        l += (a as u64) * (a as u64);
        r += b * b;
    }
    l as f64 / n_left as f64 + r as f64 / n_right as f64
}

/// Midpoint of two distinct sorted values, kept strictly below `b` so that
/// `x <= threshold` separates them.
fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) * 0.5;
    if mid < b && mid >= a {
        mid
    } else {
        a
    }
}

impl ForestModel {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Mean of the leaf class distributions reached by `x`.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, ForestError> {
        if x.len() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.n_classes];
        for tree in &self.trees {
            for (o, p) in out.iter_mut().zip(tree.leaf_distribution(x)) {
                *o += p;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o = (*o / n).clamp(0.0, 1.0));
        Ok(out)
    }

    /// Posterior of `class` for every row of `x`.
    /// Out-of-bag class posteriors for the rows of the training matrix `x`:
    /// each row is scored only by trees whose bootstrap sample left it out.
    /// Rows that every tree saw fall back to the full forest.
    pub fn oob_proba(&self, x: &FeatureMatrix, exec: Execution) -> Result<Vec<Vec<f64>>, ForestError> {
        if x.cols() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        let n = x.rows();
        let in_bag: Vec<Vec<bool>> = exec.map_range(self.trees.len(), |t| {
            let mut mask = vec![!self.params.bootstrap; n];
            if self.params.bootstrap {
                for i in training_sample(&mut tree_rng(self.master_seed, t), n, true) {
                    mask[i] = true;
                }
            }
            mask
        });
        exec.map_range(n, |i| {
            let row = x.row(i);
            let mut acc = vec![0.0; self.n_classes];
            let mut votes = 0usize;
            for (tree, mask) in self.trees.iter().zip(&in_bag) {
                if !mask[i] {
                    for (a, p) in acc.iter_mut().zip(tree.leaf_distribution(row)) {
                        *a += p;
                    }
                    votes += 1;
                }
            }
            if votes == 0 {
                return self.predict_proba(row);
            }
            Ok(acc.into_iter().map(|a| (a / votes as f64).clamp(0.0, 1.0)).collect())
        })
        .into_iter()
        .collect()
    }

    pub fn predict_class_batch(
        &self,
        x: &FeatureMatrix,
        class: usize,
        exec: Execution,
    ) -> Result<Vec<f64>, ForestError> {
        if x.cols() != self.n_features {
            return Err(ForestError::DimensionMismatch {
                expected: self.n_features,
                got: x.cols(),
            });
        }
        Ok(exec.map_range(x.rows(), |i| self.predict_proba(x.row(i)).unwrap()[class]))
    }

    pub fn with_tree_order(&self, order: &[usize]) -> ForestModel {
        ForestModel {
            trees: order.iter().map(|&i| self.trees[i].clone()).collect(),
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> Result<String, ForestError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, ForestError> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let model = ForestModel::deserialize(&mut de)?;
        de.end()?;
        Ok(model)
    }
}

// Persistence: nested node objects, shortest round-trip decimals.

#[derive(Serialize, Deserialize)]
struct ForestJson {
    version: u32,
    n_features: usize,
    n_classes: usize,
    params: ForestParams,
    master_seed: u64,
    trees: Vec<NodeJson>,
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    left: Option<Box<NodeJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    right: Option<Box<NodeJson>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    distribution: Option<Vec<f64>>,
}

fn nest(tree: &Tree, i: usize) -> NodeJson {
    match &tree.nodes[i] {
        TreeNode::Split {
            feature_index,
            threshold,
            left,
            right,
        } => NodeJson {
            feature_index: Some(*feature_index),
            threshold: Some(*threshold),
            left: Some(Box::new(nest(tree, *left))),
            right: Some(Box::new(nest(tree, *right))),
            distribution: None,
        },
        TreeNode::Leaf { distribution } => NodeJson {
            feature_index: None,
            threshold: None,
            left: None,
            right: None,
            distribution: Some(distribution.clone()),
        },
    }
}

/// Fills slot `id`. Children get adjacent slots when their parent is filled,
/// matching the arena layout produced by training.
fn flatten(node: NodeJson, id: usize, nodes: &mut Vec<TreeNode>, model: &ForestJson) -> Result<(), String> {
    match node {
        NodeJson {
            feature_index: Some(f),
            threshold: Some(t),
            left: Some(l),
            right: Some(r),
            distribution: None,
        } => {
            if f >= model.n_features {
                return Err(format!("feature index {f} >= {}", model.n_features));
            }
            let left = nodes.len();
            let right = left + 1;
            nodes.push(TreeNode::Leaf {
                distribution: Vec::new(),
            });
            nodes.push(TreeNode::Leaf {
                distribution: Vec::new(),
            });
            flatten(*l, left, nodes, model)?;
            flatten(*r, right, nodes, model)?;
            nodes[id] = TreeNode::Split {
                feature_index: f,
                threshold: t,
                left,
                right,
            };
        }
        NodeJson {
            feature_index: None,
            threshold: None,
            left: None,
            right: None,
            distribution: Some(dist),
        } => {
            let sum: f64 = dist.iter().sum();
            if dist.len() != model.n_classes || (sum - 1.0).abs() > 1e-9 {
                return Err("leaf distribution must have one probability per class summing to 1".into());
            }
            nodes[id] = TreeNode::Leaf { distribution: dist };
        }
        _ => return Err("node must be either a split or a leaf".into()),
    }
    Ok(())
}

impl Serialize for ForestModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ForestJson {
            version: MODEL_VERSION,
            n_features: self.n_features,
            n_classes: self.n_classes,
            params: self.params.clone(),
            master_seed: self.master_seed,
            trees: self.trees.iter().map(|t| nest(t, 0)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ForestModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let mut raw = ForestJson::deserialize(deserializer)?;
        if raw.version != MODEL_VERSION {
            return Err(D::Error::custom(format!("unsupported forest version {}", raw.version)));
        }
        if raw.trees.is_empty() {
            return Err(D::Error::custom("forest has no trees"));
        }
        let roots = std::mem::take(&mut raw.trees);
        let mut trees = Vec::with_capacity(roots.len());
        for root in roots {
            let mut nodes = vec![TreeNode::Leaf {
                distribution: Vec::new(),
            }];
            flatten(root, 0, &mut nodes, &raw).map_err(D::Error::custom)?;
            trees.push(Tree { nodes });
        }
        Ok(ForestModel {
            trees,
            n_features: raw.n_features,
            n_classes: raw.n_classes,
            params: raw.params,
            master_seed: raw.master_seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_tree() -> ForestParams {
        ForestParams {
            n_trees: 1,
            bootstrap: false,
            ..ForestParams::test_profile()
        }
    }

    #[test]
    fn single_class_posterior() {
        let x = FeatureMatrix::from_rows(&[[0.0, 1.0], [2.0, 3.0], [4.0, 1.0]]).unwrap();
        let model = train_forest(&x, &[1, 1, 1], 2, &ForestParams::test_profile(), 3).unwrap();
        for t in model.trees() {
            assert_eq!(
                t.nodes(),
                &[TreeNode::Leaf {
                    distribution: vec![0.0, 1.0]
                }]
            );
        }
        assert_eq!(model.predict_proba(&[9.0, -9.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn hand_traced_leaf_counts() {
        // with max_depth 1 the only split is x <= 1.5; the right leaf holds
        // samples {2, 3, 4, 5} of which one is positive
        let x = FeatureMatrix::from_rows(&[[1.0], [1.0], [2.0], [3.0], [4.0], [5.0]]).unwrap();
        let y = [1, 1, 0, 0, 1, 0];
        let params = ForestParams {
            max_depth: Some(1),
            ..one_tree()
        };
        let model = train_forest(&x, &y, 2, &params, 0).unwrap();
        assert_eq!(
            model.trees()[0].nodes()[0],
            TreeNode::Split {
                feature_index: 0,
                threshold: 1.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(model.predict_proba(&[3.5]).unwrap(), vec![0.75, 0.25]);
        assert_eq!(model.predict_proba(&[0.0]).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn thresholds_are_midpoints() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0], [3.0], [7.0]]).unwrap();
        let model = train_forest(&x, &[0, 0, 1, 1], 2, &one_tree(), 0).unwrap();
        assert!(matches!(
            model.trees()[0].nodes()[0],
            TreeNode::Split { threshold, .. } if threshold == 2.0
        ));
        assert_eq!(midpoint(1.0, 1.0 + f64::EPSILON), 1.0);
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // both features separate the classes perfectly
        let x = FeatureMatrix::from_rows(&[[0.0, 10.0], [1.0, 11.0], [2.0, 12.0], [3.0, 13.0]]).unwrap();
        let params = ForestParams {
            max_features: MaxFeatures::All,
            ..one_tree()
        };
        let model = train_forest(&x, &[0, 0, 1, 1], 2, &params, 5).unwrap();
        assert!(matches!(
            model.trees()[0].nodes()[0],
            TreeNode::Split { feature_index: 0, threshold, .. } if threshold == 1.5
        ));
    }

    #[test]
    fn errors() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let p = ForestParams::test_profile();
        assert!(matches!(
            train_forest(&x, &[0, 2], 2, &p, 0),
            Err(ForestError::LabelOutOfRange { label: 2, n_classes: 2 })
        ));
        let empty = FeatureMatrix::new(0, 3, vec![]).unwrap();
        assert!(matches!(
            train_forest(&empty, &[], 2, &p, 0),
            Err(ForestError::EmptyTrainingSet)
        ));
        let bad = ForestParams {
            n_trees: 0,
            ..p.clone()
        };
        assert!(matches!(
            train_forest(&x, &[0, 1], 2, &bad, 0),
            Err(ForestError::InvalidParams(_))
        ));
        let model = train_forest(&x, &[0, 1], 2, &p, 0).unwrap();
        assert!(matches!(
            model.predict_proba(&[0.0, 1.0]),
            Err(ForestError::DimensionMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn max_features_rules() {
        assert_eq!(MaxFeatures::Sqrt.resolve(388), 19);
        assert_eq!(MaxFeatures::Sqrt.resolve(1), 1);
        assert_eq!(MaxFeatures::All.resolve(7), 7);
        assert_eq!(MaxFeatures::Fixed(3).resolve(7), 3);
    }

    #[test]
    fn json_rejects_malformed_trees() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let model = train_forest(&x, &[0, 1], 2, &one_tree(), 0).unwrap();
        let json = model.to_json().unwrap();
        assert_eq!(ForestModel::from_json(&json).unwrap(), model);
        let bad = json.replace("\"feature_index\":0", "\"feature_index\":4");
        assert!(ForestModel::from_json(&bad).is_err());
        let bad = json.replace("[1.0,0.0]", "[0.5,0.0]");
        assert!(ForestModel::from_json(&bad).is_err());
    }

    #[test]
    fn out_of_bag_ignores_trees_that_saw_the_row() {
        // row 5 carries a flipped label; trees that trained on it isolate it in
        // a pure leaf, trees that did not vote with its neighbours
        let rows: Vec<[f64; 1]> = (0..20).map(|i| [i as f64]).collect();
        let mut y: Vec<usize> = (0..20).map(|i| (i >= 10) as usize).collect();
        y[5] = 1;
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let model = train_forest(&x, &y, 2, &ForestParams::test_profile(), 11).unwrap();
        let oob = model.oob_proba(&x, Execution::Serial).unwrap();
        assert_eq!(oob[5], vec![1.0, 0.0]);
        assert!(model.predict_proba(&[5.0]).unwrap()[1] > 0.5);
        assert_eq!(oob, model.oob_proba(&x, Execution::Parallel).unwrap());

        let model = train_forest(&x, &y, 2, &one_tree(), 0).unwrap();
        let oob = model.oob_proba(&x, Execution::Serial).unwrap();
        for (i, p) in oob.iter().enumerate() {
            assert_eq!(p, &model.predict_proba(x.row(i)).unwrap());
        }
    }
}
