//! CART-style regression trees: greedy variance-reduction splits with
//! constant or linear leaf payloads. Shared by the random forest, the
//! gradient booster and the model-tree committee.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LeafPayload {
    Constant(f64),
    Linear {
        intercept: f64,
        coefficients: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf(LeafPayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub min_leaf: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf(payload) => {
                    return match payload {
                        LeafPayload::Constant(v) => *v,
                        LeafPayload::Linear {
                            intercept,
                            coefficients,
                        } => {
                            intercept
                                + coefficients
                                    .iter()
                                    .zip(row)
                                    .map(|(c, x)| c * x)
                                    .sum::<f64>()
                        }
                    };
                }
            }
        }
    }

    /// Row indices of training samples falling into each leaf, in node order.
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut node = 0usize;
        loop {
            match &self.nodes[node] {
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf(_) => return node,
            }
        }
    }
}

/// Best split of `rows` on `feature`: (threshold, variance reduction).
///
/// Thresholds are midpoints between distinct consecutive sorted values; both
/// children must keep at least `min_leaf` rows.
pub fn best_split_on_feature(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let n = rows.len();
    if n < 2 * min_leaf {
        return None;
    }
    let mut order: Vec<usize> = rows.to_vec();
    order.sort_by(|&a, &b| {
        x.get(a, feature)
            .partial_cmp(&x.get(b, feature))
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let total_sum: f64 = order.iter().map(|&r| y[r]).sum();
    let total_sq: f64 = order.iter().map(|&r| y[r] * y[r]).sum();
    let parent_sse = total_sq - total_sum * total_sum / n as f64;

    let mut left_sum = 0.0;
    let mut left_sq = 0.0;
    let mut best: Option<(f64, f64)> = None;
    for i in 0..n - 1 {
        let r = order[i];
        left_sum += y[r];
        left_sq += y[r] * y[r];
        let n_left = i + 1;
        let n_right = n - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let v = x.get(r, feature);
        let v_next = x.get(order[i + 1], feature);
        if v_next <= v {
            continue;
        }
        let right_sum = total_sum - left_sum;
        let right_sq = total_sq - left_sq;
        let sse_left = left_sq - left_sum * left_sum / n_left as f64;
        let sse_right = right_sq - right_sum * right_sum / n_right as f64;
        let reduction = parent_sse - sse_left - sse_right;
        let threshold = 0.5 * (v + v_next);
        if best.map_or(true, |(_, r0)| reduction > r0) {
            best = Some((threshold, reduction));
        }
    }
    best
}

pub struct TreeOptions {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features sampled per split (None = all features).
    pub mtry: Option<usize>,
}

/// Fits a constant-leaf regression tree on the given rows.
///
/// `rng` is consumed only when `mtry` asks for per-split feature sampling,
/// so deterministic trees stay deterministic.
pub fn fit_tree(
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    opts: &TreeOptions,
    rng: &mut ChaCha8Rng,
) -> RegressionTree {
    let mut tree = RegressionTree {
        nodes: Vec::new(),
        min_leaf: opts.min_leaf,
    };
    let all_features: Vec<usize> = (0..x.ncols()).collect();
    build(&mut tree, x, y, rows, 0, opts, &all_features, rng);
    tree
}

fn leaf_mean(y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64
}

fn build(
    tree: &mut RegressionTree,
    x: &Matrix,
    y: &[f64],
    rows: &[usize],
    depth: usize,
    opts: &TreeOptions,
    all_features: &[usize],
    rng: &mut ChaCha8Rng,
) -> usize {
    let node_id = tree.nodes.len();
    tree.nodes.push(Node::Leaf(LeafPayload::Constant(0.0)));

    let depth_ok = opts.max_depth.map_or(true, |d| depth < d);
    let split = if depth_ok && rows.len() >= 2 * opts.min_leaf {
        let candidates: Vec<usize> = match opts.mtry {
            Some(m) if m < all_features.len() => {
                let mut pool = all_features.to_vec();
                pool.shuffle(rng);
                pool.truncate(m);
                pool.sort_unstable();
                pool
            }
            _ => all_features.to_vec(),
        };
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &candidates {
            if let Some((threshold, reduction)) =
                best_split_on_feature(x, y, rows, f, opts.min_leaf)
            {
                if best.map_or(true, |(_, _, r0)| reduction > r0) {
                    best = Some((f, threshold, reduction));
                }
            }
        }
        best.filter(|&(_, _, reduction)| reduction > 1e-12)
    } else {
        None
    };

    match split {
        Some((feature, threshold, _)) => {
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&r| x.get(r, feature) <= threshold);
            let left = build(tree, x, y, &left_rows, depth + 1, opts, all_features, rng);
            let right = build(tree, x, y, &right_rows, depth + 1, opts, all_features, rng);
            tree.nodes[node_id] = Node::Internal {
                feature,
                threshold,
                left,
                right,
            };
        }
        None => {
            tree.nodes[node_id] = Node::Leaf(LeafPayload::Constant(leaf_mean(y, rows)));
        }
    }
    node_id
}

/// Public entry point matching the tree-building contract: greedy
/// variance-reduction CART with constant leaves.
pub fn fit_cart(x: &Matrix, y: &[f64], max_depth: Option<usize>, min_leaf: usize) -> RegressionTree {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let opts = TreeOptions {
        max_depth,
        min_leaf,
        mtry: None,
    };
    let mut rng = crate::seed::rng(0); // unused: mtry is None
    fit_tree(x, y, &rows, &opts, &mut rng)
}
