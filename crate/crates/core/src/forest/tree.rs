use std::cmp::Ordering;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ForestParams;
use crate::labeler::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("gini impurity of an empty node")]
pub struct EmptyNode;

/// `1 - p_easy^2 - p_hard^2` for `(easy, hard)` counts.
pub fn gini(counts: [u64; 2]) -> Result<f64, EmptyNode> {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return Err(EmptyNode);
    }
    let pe = counts[0] as f64 / n;
    let ph = counts[1] as f64 / n;
    Ok(1.0 - pe * pe - ph * ph)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub impurity_decrease: f64,
}

/// `sum(c^2) / n` for one child, as an exact fraction.
#[derive(Clone, Copy)]
struct Purity {
    num: u128,
    den: u128,
}

impl Purity {
    fn of(counts: [u64; 2]) -> Purity {
        let [e, h] = counts.map(u128::from);
        Purity {
            num: e * e + h * h,
            den: e + h,
        }
    }

    /// Sum of the children's purities. Larger is a better split.
    fn pair(l: [u64; 2], r: [u64; 2]) -> Purity {
        let (a, b) = (Purity::of(l), Purity::of(r));
        Purity {
            num: a.num * b.den + b.num * a.den,
            den: a.den * b.den,
        }
    }

    fn cmp(&self, other: &Purity) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a / 2.0 + b / 2.0;
    if m >= a && m < b {
        m
    } else {
        a
    }
}

fn class_counts(labels: impl Iterator<Item = Label>) -> [u64; 2] {
    let mut c = [0u64; 2];
    for l in labels {
        c[l.index()] += 1;
    }
    c
}

/// Majority label; ties go to `Hard`.
pub fn majority(counts: [u64; 2]) -> Label {
    if counts[0] > counts[1] {
        Label::Easy
    } else {
        Label::Hard
    }
}

type Candidate = (Purity, usize, f64, [u64; 2], [u64; 2]);

/// Best Gini split of `sample` (indices into `x`/`y`) over `candidates`.
///
/// Scores are compared exactly, so equal-quality splits always resolve to
/// the lowest feature index and then the lowest threshold.
pub fn best_split(
    x: &[Vec<f64>],
    y: &[Label],
    sample: &[usize],
    candidates: &[usize],
    min_samples_leaf: usize,
) -> Option<Split> {
    let n = sample.len();
    let min_leaf = min_samples_leaf.max(1);
    if n < 2 * min_leaf {
        return None;
    }
    let total = class_counts(sample.iter().map(|&i| y[i]));
    let parent = Purity::of(total);
    let parent_gini = gini(total).ok()?;

    let mut features = candidates.to_vec();
    features.sort_unstable();
    features.dedup();

    // (score, feature, threshold, left counts, right counts)
    let mut best: Option<Candidate> = None;
    let mut order = sample.to_vec();
    for &f in &features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = [0u64; 2];
        for k in 0..n - 1 {
            left[y[order[k]].index()] += 1;
            let (lo, hi) = (x[order[k]][f], x[order[k + 1]][f]);
            if lo == hi || k + 1 < min_leaf || n - k - 1 < min_leaf {
                continue;
            }
            let right = [total[0] - left[0], total[1] - left[1]];
            let score = Purity::pair(left, right);
            if score.cmp(&parent) != Ordering::Greater {
                continue;
            }
            if best.as_ref().is_none_or(|b| score.cmp(&b.0) == Ordering::Greater) {
                best = Some((score, f, midpoint(lo, hi), left, right));
            }
        }
    }
    best.map(|(_, feature, threshold, l, r)| {
        let w = |c: [u64; 2]| (c[0] + c[1]) as f64 / n as f64 * gini(c).unwrap_or(0.0);
        Split {
            feature,
            threshold,
            impurity_decrease: parent_gini - w(l) - w(r),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Node {
    /// `x[feature] <= threshold` goes left.
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: Label,
        /// `(easy, hard)` training rows that reached this leaf.
        class_counts: [u64; 2],
    },
}

/// Nodes in preorder; the root is `nodes[0]` and children follow their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn leaf_for(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> Label {
        match &self.nodes[self.leaf_for(x)] {
            Node::Leaf { label, .. } => *label,
            Node::Internal { .. } => unreachable!(),
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn walk(t: &DecisionTree, i: usize) -> usize {
            match &t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    /// Structural checks for trees read from disk.
    pub fn validate(&self, width: usize) -> Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Internal {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                if *feature >= width {
                    return Err(format!("node {i} tests feature {feature}, width is {width}"));
                }
                if !threshold.is_finite() {
                    return Err(format!("node {i} has a non-finite threshold"));
                }
                for &c in [left, right] {
                    if c <= i || c >= self.nodes.len() {
                        return Err(format!("node {i} has invalid child {c}"));
                    }
                    parents[c] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a tree".into());
        }
        Ok(())
    }
}

/// Grows a tree on `sample` (indices into `x`/`y`, repeats allowed).
pub fn grow<R: Rng>(
    x: &[Vec<f64>],
    y: &[Label],
    sample: &[usize],
    params: &ForestParams,
    features_per_split: usize,
    rng: &mut R,
) -> DecisionTree {
    let width = x.first().map_or(0, Vec::len);
    let mut tree = DecisionTree { nodes: Vec::new() };
    grow_node(x, y, sample.to_vec(), 0, params, features_per_split.min(width), width, rng, &mut tree);
    tree
}

#[allow(clippy::too_many_arguments)]
fn grow_node<R: Rng>(
    x: &[Vec<f64>],
    y: &[Label],
    sample: Vec<usize>,
    depth: usize,
    params: &ForestParams,
    k: usize,
    width: usize,
    rng: &mut R,
    tree: &mut DecisionTree,
) -> usize {
    let id = tree.nodes.len();
    let counts = class_counts(sample.iter().map(|&i| y[i]));
    let leaf = Node::Leaf {
        label: majority(counts),
        class_counts: counts,
    };
    tree.nodes.push(leaf);
    if depth >= params.max_tree_depth || counts[0] == 0 || counts[1] == 0 || k == 0 {
        return id;
    }
    let candidates = index::sample(rng, width, k).into_vec();
    let Some(split) = best_split(x, y, &sample, &candidates, params.min_samples_leaf) else {
        return id;
    };
    let (l, r): (Vec<usize>, Vec<usize>) = sample
        .into_iter()
        .partition(|&i| x[i][split.feature] <= split.threshold);
    let left = grow_node(x, y, l, depth + 1, params, k, width, rng, tree);
    let right = grow_node(x, y, r, depth + 1, params, k, width, rng, tree);
    tree.nodes[id] = Node::Internal {
        feature: split.feature,
        threshold: split.threshold,
        left,
        right,
    };
    id
}

/// Draws a bootstrap sample, then grows a tree on it.
pub fn build_tree<R: Rng>(
    x: &[Vec<f64>],
    y: &[Label],
    params: &ForestParams,
    features_per_split: usize,
    rng: &mut R,
) -> DecisionTree {
    let n = x.len();
    let size = ((params.bootstrap_fraction * n as f64).round() as usize).clamp(1, n.max(1));
    let sample: Vec<usize> = (0..size).map(|_| rng.random_range(0..n)).collect();
    grow(x, y, &sample, params, features_per_split, rng)
}
