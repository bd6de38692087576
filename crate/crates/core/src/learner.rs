//! CART-style binary decision tree with Gini splits.
//!
//! Candidate thresholds are midpoints between consecutive distinct values of
//! a feature and a row goes left iff its value is `<=` the threshold. Split
//! scores depend only on class counts on each side, and ties go to the lower
//! feature index and then the lower threshold, so the fitted tree does not
//! depend on row order.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::BinaryDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    /// `None` grows until another stopping rule applies.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
}

impl Default for TreeSpec {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 2,
        }
    }
}

impl TreeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(Error::Config(
                "tree.min_samples_leaf must be at least 1".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(Error::Config("tree.max_depth must be positive".into()));
        }
        Ok(())
    }
}

/// Any fitted binary classifier usable as a chain link.
pub trait BinaryClassifier {
    fn arity(&self) -> usize;

    /// Prediction without the arity check; `x.len()` must equal `arity()`.
    fn predict_unchecked(&self, x: &[f64]) -> u8;

    fn predict(&self, x: &[f64]) -> Result<u8> {
        if x.len() != self.arity() {
            return Err(Error::ArityMismatch {
                expected: self.arity(),
                got: x.len(),
            });
        }
        Ok(self.predict_unchecked(x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        prediction: u8,
        negatives: usize,
        positives: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    arity: usize,
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    /// Weighted Gini impurity of the children, scaled by node size.
    score: f64,
}

fn scaled_gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    2.0 * pos as f64 * (total - pos) as f64 / total as f64
}

fn leaf(y: &[u8], rows: &[u32]) -> Node {
    let positives = rows.iter().filter(|&&r| y[r as usize] == 1).count();
    let negatives = rows.len() - positives;
    Node::Leaf {
        prediction: u8::from(positives >= negatives),
        negatives,
        positives,
    }
}

impl DecisionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Prediction reading feature `f` through `value(f)`.
    pub fn predict_by(&self, value: impl Fn(usize) -> f64) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { prediction, .. } => return prediction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if value(feature) <= threshold {
                        left
                    } else {
                        right
                    }
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. }))
    }

    /// Fits on every row of `x`.
    pub fn fit(x: ArrayView2<'_, f64>, y: &[u8], spec: &TreeSpec) -> Self {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        Self::fit_rows(x, y, &rows, spec)
    }

    /// Fits on the listed rows of `x` (with their targets from `y`).
    ///
    /// Panics if `rows` is empty or indexes outside `x`.
    pub fn fit_rows(x: ArrayView2<'_, f64>, y: &[u8], rows: &[usize], spec: &TreeSpec) -> Self {
        assert!(!rows.is_empty(), "cannot fit a tree on zero rows");
        assert_eq!(x.nrows(), y.len());
        let d = x.ncols();
        let min_leaf = spec.min_samples_leaf.max(1);

        // Per-feature row orderings; every node owns the same range in each.
        let mut sorted: Vec<Vec<u32>> = (0..d)
            .map(|f| {
                let mut order: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
                order.sort_by(|&a, &b| x[[a as usize, f]].total_cmp(&x[[b as usize, f]]));
                order
            })
            .collect();
        let mut base: Vec<u32> = rows.iter().map(|&r| r as u32).collect();

        let mut nodes: Vec<Node> = Vec::new();
        let mut goes_left = vec![false; x.nrows()];
        let mut scratch: Vec<u32> = Vec::with_capacity(rows.len());
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, rows.len(), 0usize)];
        nodes.push(leaf(y, &base));

        while let Some((slot, start, end, depth)) = stack.pop() {
            let len = end - start;
            let members = &base[start..end];
            let positives = members.iter().filter(|&&r| y[r as usize] == 1).count();
            nodes[slot] = leaf(y, members);
            let pure = positives == 0 || positives == len;
            let depth_reached = spec.max_depth.is_some_and(|m| depth >= m);
            if pure || depth_reached || len < 2 * min_leaf || d == 0 {
                continue;
            }

            let mut best: Option<Candidate> = None;
            for (f, order) in sorted.iter().enumerate() {
                let slice = &order[start..end];
                let mut left_pos = 0usize;
                for i in 0..len - 1 {
                    let r = slice[i] as usize;
                    left_pos += usize::from(y[r] == 1);
                    let n_left = i + 1;
                    if n_left < min_leaf || len - n_left < min_leaf {
                        continue;
                    }
                    let a = x[[r, f]];
                    let b = x[[slice[i + 1] as usize, f]];
                    if a >= b {
                        continue;
                    }
                    let score = scaled_gini(left_pos, n_left)
                        + scaled_gini(positives - left_pos, len - n_left);
                    if best.as_ref().is_none_or(|c| score < c.score - 1e-12) {
                        let mid = a + (b - a) / 2.0;
                        let threshold = if mid < b { mid } else { a };
                        best = Some(Candidate {
                            feature: f,
                            threshold,
                            score,
                        });
                    }
                }
            }
            let Some(split) = best else {
                continue;
            };

            let mut n_left = 0;
            for &r in &base[start..end] {
                let left = x[[r as usize, split.feature]] <= split.threshold;
                goes_left[r as usize] = left;
                n_left += usize::from(left);
            }
            for order in sorted.iter_mut().chain(std::iter::once(&mut base)) {
                scratch.clear();
                scratch.extend(order[start..end].iter().filter(|&&r| goes_left[r as usize]));
                scratch.extend(
                    order[start..end]
                        .iter()
                        .filter(|&&r| !goes_left[r as usize]),
                );
                order[start..end].copy_from_slice(&scratch);
            }

            let left = nodes.len();
            nodes.push(leaf(y, &base[start..start + n_left]));
            let right = nodes.len();
            nodes.push(leaf(y, &base[start + n_left..end]));
            nodes[slot] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            stack.push((right, start + n_left, end, depth + 1));
            stack.push((left, start, start + n_left, depth + 1));
        }

        Self { arity: d, nodes }
    }
}

impl BinaryClassifier for DecisionTree {
    fn arity(&self) -> usize {
        self.arity
    }

    fn predict_unchecked(&self, x: &[f64]) -> u8 {
        self.predict_by(|f| x[f])
    }
}

/// Fits a tree on a binary training set.
///
/// Panics if `bd` is empty.
pub fn fit_tree(bd: &BinaryDataset, spec: &TreeSpec) -> DecisionTree {
    DecisionTree::fit(bd.view(), &bd.targets, spec)
}
