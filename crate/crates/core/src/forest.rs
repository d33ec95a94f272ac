//! Random-forest classifier over plain feature rows, ignoring graph
//! structure. Gini splits, bootstrap samples, ceil(sqrt(D)) features per
//! split, trees grown to purity.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::numerics::Matrix;
use crate::seeds::derive_seed;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("labels and rows differ: {labels} labels for {rows} rows")]
    LabelCountMismatch { labels: usize, rows: usize },
    #[error("training set holds a single class")]
    SingleClass,
    #[error("label {0} out of range for {1} classes")]
    LabelOutOfRange(usize, usize),
    #[error("input width {got} does not match training width {want}")]
    WidthMismatch { got: usize, want: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Build trees in parallel. Per-tree seeds derive from the master seed,
    /// so parallel and serial fits produce identical forests.
    pub parallel: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            parallel: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum TreeNode {
    Leaf {
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    fn predict_row(&self, row: &[f64]) -> usize {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { class } => return class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
    pub n_classes: usize,
    pub n_features: usize,
}

/// Fit a forest of `cfg.n_trees` trees on X (rows = samples) and integer
/// labels y. Deterministic given `seed`, regardless of `cfg.parallel`.
pub fn rf_fit(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    seed: u64,
    cfg: &ForestConfig,
) -> Result<RandomForest, ForestError> {
    if x.rows() == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if y.len() != x.rows() {
        return Err(ForestError::LabelCountMismatch {
            labels: y.len(),
            rows: x.rows(),
        });
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
        return Err(ForestError::LabelOutOfRange(bad, n_classes));
    }
    let mut seen = vec![false; n_classes];
    for &c in y {
        seen[c] = true;
    }
    if seen.iter().filter(|&&s| s).count() < 2 {
        return Err(ForestError::SingleClass);
    }

    let build = |tree_index: usize| {
        let tree_seed = derive_seed(seed, &format!("tree-{tree_index}"));
        grow_tree(x, y, n_classes, tree_seed)
    };
    let trees: Vec<DecisionTree> = if cfg.parallel {
        (0..cfg.n_trees).into_par_iter().map(build).collect()
    } else {
        (0..cfg.n_trees).map(build).collect()
    };
    Ok(RandomForest {
        trees,
        n_classes,
        n_features: x.cols(),
    })
}

fn grow_tree(x: &Matrix, y: &[usize], n_classes: usize, seed: u64) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = x.rows();
    let in_bag: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mut tree = DecisionTree { nodes: Vec::new() };
    build_node(&mut tree, x, y, n_classes, in_bag, &mut rng);
    tree
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &count) in counts.iter().enumerate() {
        if count > counts[best] {
            best = c;
        }
    }
    best
}

fn gini(counts: &[usize], total: usize) -> f64 {
    let mut g = 1.0;
    for &c in counts {
        let p = c as f64 / total as f64;
        g -= p * p;
    }
    g
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

/// Appends the subtree for `samples` and returns its root index.
fn build_node(
    tree: &mut DecisionTree,
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    samples: Vec<usize>,
    rng: &mut ChaCha8Rng,
) -> usize {
    let mut counts = vec![0usize; n_classes];
    for &s in &samples {
        counts[y[s]] += 1;
    }
    let node_index = tree.nodes.len();
    if counts.iter().filter(|&&c| c > 0).count() <= 1 {
        tree.nodes.push(TreeNode::Leaf {
            class: majority(&counts),
        });
        return node_index;
    }

    // ceil(sqrt(D)) random features; widen to all features only when none
    // of the drawn ones admits a split.
    let d = x.cols();
    let mtry = (d as f64).sqrt().ceil() as usize;
    let drawn: Vec<usize> = sample(rng, d, mtry.min(d)).into_iter().collect();
    let best = find_best_split(x, y, n_classes, &samples, &drawn).or_else(|| {
        let rest: Vec<usize> = (0..d).filter(|f| !drawn.contains(f)).collect();
        find_best_split(x, y, n_classes, &samples, &rest)
    });
    let Some(split) = best else {
        tree.nodes.push(TreeNode::Leaf {
            class: majority(&counts),
        });
        return node_index;
    };

    let (mut left, mut right) = (Vec::new(), Vec::new());
    for &s in &samples {
        if x.get(s, split.feature) <= split.threshold {
            left.push(s);
        } else {
            right.push(s);
        }
    }
    tree.nodes.push(TreeNode::Leaf { class: 0 }); // placeholder, patched below
    let left_index = build_node(tree, x, y, n_classes, left, rng);
    let right_index = build_node(tree, x, y, n_classes, right, rng);
    tree.nodes[node_index] = TreeNode::Split {
        feature: split.feature,
        threshold: split.threshold,
        left: left_index,
        right: right_index,
    };
    node_index
}

/// Minimal weighted-Gini split over the candidate features; zero-gain splits
/// are allowed (required to untangle XOR-like data), ties keep the first
/// candidate in draw order.
fn find_best_split(
    x: &Matrix,
    y: &[usize],
    n_classes: usize,
    samples: &[usize],
    features: &[usize],
) -> Option<BestSplit> {
    let total = samples.len();
    let mut best: Option<BestSplit> = None;
    let mut ordered = samples.to_vec();
    for &feature in features {
        ordered.sort_by(|&a, &b| {
            x.get(a, feature)
                .partial_cmp(&x.get(b, feature))
                .expect("finite feature values")
        });
        let mut left_counts = vec![0usize; n_classes];
        let mut right_counts = vec![0usize; n_classes];
        for &s in &ordered {
            right_counts[y[s]] += 1;
        }
        for i in 0..total - 1 {
            let s = ordered[i];
            left_counts[y[s]] += 1;
            right_counts[y[s]] -= 1;
            let (v, next) = (x.get(s, feature), x.get(ordered[i + 1], feature));
            if v == next {
                continue;
            }
            let n_left = i + 1;
            let n_right = total - n_left;
            let impurity = (n_left as f64 * gini(&left_counts, n_left)
                + n_right as f64 * gini(&right_counts, n_right))
                / total as f64;
            if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                best = Some(BestSplit {
                    feature,
                    threshold: (v + next) / 2.0,
                    impurity,
                });
            }
        }
    }
    best
}

impl RandomForest {
    fn check_width(&self, x: &Matrix) -> Result<(), ForestError> {
        if x.cols() != self.n_features {
            return Err(ForestError::WidthMismatch {
                got: x.cols(),
                want: self.n_features,
            });
        }
        Ok(())
    }

    /// Per-row vote counts over the trees (the exact rational numerator of
    /// the class probabilities).
    pub fn predict_votes(&self, x: &Matrix) -> Result<Vec<Vec<usize>>, ForestError> {
        self.check_width(x)?;
        let mut votes = vec![vec![0usize; self.n_classes]; x.rows()];
        for tree in &self.trees {
            for (r, row_votes) in votes.iter_mut().enumerate() {
                row_votes[tree.predict_row(x.row(r))] += 1;
            }
        }
        Ok(votes)
    }

    /// Per-class probability rows: fraction of trees voting each class.
    pub fn predict_proba(&self, x: &Matrix) -> Result<Matrix, ForestError> {
        let votes = self.predict_votes(x)?;
        let mut out = Matrix::zeros(x.rows(), self.n_classes);
        for (r, row_votes) in votes.iter().enumerate() {
            for (c, &v) in row_votes.iter().enumerate() {
                out.set(r, c, v as f64 / self.trees.len() as f64);
            }
        }
        Ok(out)
    }

    /// Majority-vote class per row (ties to the lowest class index).
    pub fn predict_class(&self, x: &Matrix) -> Result<Vec<usize>, ForestError> {
        Ok(self
            .predict_votes(x)?
            .into_iter()
            .map(|votes| majority(&votes))
            .collect())
    }

    /// Inspection dump: one line per node (feature index, threshold,
    /// children), one block per tree.
    pub fn dump_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = format!(
            "forest,trees={},classes={},features={}\n",
            self.trees.len(),
            self.n_classes,
            self.n_features
        );
        for (i, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(out, "tree,{i}");
            for (n, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Leaf { class } => {
                        let _ = writeln!(out, "{n},leaf,class={class}");
                    }
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let _ = writeln!(
                            out,
                            "{n},split,feature={feature},threshold={threshold},left={left},right={right}"
                        );
                    }
                }
            }
        }
        out
    }
}
