//! Committee of regression trees with ridge linear models at the leaves.
//! Later committee members train on residual-corrected targets; an optional
//! nearest-neighbor adjustment pulls predictions toward nearby training
//! targets.

use serde::{Deserialize, Serialize};

use super::cart::{fit_tree, LeafPayload, Node, RegressionTree, TreeOptions};
use super::spec::ModelTreeParams;
use crate::data::Matrix;
use crate::error::Result;
use crate::linalg::solve_spd;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTreeModel {
    pub members: Vec<RegressionTree>,
    pub neighbors: usize,
    /// Training data, kept only when neighbor blending is on.
    pub train_x: Option<Matrix>,
    pub train_y: Option<Vec<f64>>,
}

/// Ridge fit on the rows of one leaf; falls back to the mean when the
/// normal equations are ill-conditioned.
fn leaf_linear(x: &Matrix, y: &[f64], rows: &[usize], lambda: f64) -> LeafPayload {
    let p = x.ncols();
    let n = rows.len();
    let mean = rows.iter().map(|&r| y[r]).sum::<f64>() / n as f64;
    if n < p + 2 {
        return LeafPayload::Constant(mean);
    }
    // Centered ridge: solve (Xc'Xc + lambda I) w = Xc'yc, intercept from means.
    let mut x_means = vec![0.0f64; p];
    for &r in rows {
        for c in 0..p {
            x_means[c] += x.get(r, c);
        }
    }
    for m in &mut x_means {
        *m /= n as f64;
    }
    let mut a = vec![0.0f64; p * p];
    let mut b = vec![0.0f64; p];
    for &r in rows {
        let yc = y[r] - mean;
        for i in 0..p {
            let xi = x.get(r, i) - x_means[i];
            b[i] += xi * yc;
            for j in i..p {
                a[i * p + j] += xi * (x.get(r, j) - x_means[j]);
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            a[i * p + j] = a[j * p + i];
        }
        a[i * p + i] += lambda * n as f64;
    }
    match solve_spd(&a, &b) {
        Ok(w) => {
            let intercept = mean - w.iter().zip(&x_means).map(|(wi, m)| wi * m).sum::<f64>();
            if w.iter().all(|v| v.is_finite()) && intercept.is_finite() {
                LeafPayload::Linear {
                    intercept,
                    coefficients: w,
                }
            } else {
                LeafPayload::Constant(mean)
            }
        }
        Err(_) => LeafPayload::Constant(mean),
    }
}

fn fit_member(x: &Matrix, y: &[f64], params: &ModelTreeParams) -> RegressionTree {
    let rows: Vec<usize> = (0..x.nrows()).collect();
    let opts = TreeOptions {
        max_depth: Some(params.max_depth),
        min_leaf: params.min_leaf,
        mtry: None,
    };
    let mut rng = crate::seed::rng(0); // unused: mtry is None
    let mut tree = fit_tree(x, y, &rows, &opts, &mut rng);

    // Replace constant leaves with ridge models over their samples.
    let mut leaf_rows: Vec<Vec<usize>> = vec![Vec::new(); tree.nodes.len()];
    for &r in &rows {
        leaf_rows[tree.leaf_of(x.row(r))].push(r);
    }
    for (id, rows_in_leaf) in leaf_rows.iter().enumerate() {
        if rows_in_leaf.is_empty() {
            continue;
        }
        if let Node::Leaf(payload) = &mut tree.nodes[id] {
            *payload = leaf_linear(x, y, rows_in_leaf, 1e-3);
        }
    }
    tree
}

pub fn fit_model_tree(x: &Matrix, y: &[f64], params: &ModelTreeParams) -> Result<ModelTreeModel> {
    let n = x.nrows();
    let mut members = Vec::with_capacity(params.committees);
    let mut running: Vec<f64> = vec![0.0; n];
    for m in 0..params.committees {
        // Later members see targets pushed away from the current committee
        // error: t = y - (avg_prediction - y).
        let target: Vec<f64> = if m == 0 {
            y.to_vec()
        } else {
            (0..n).map(|i| 2.0 * y[i] - running[i] / m as f64).collect()
        };
        let tree = fit_member(x, &target, params);
        for i in 0..n {
            running[i] += tree.predict_row(x.row(i));
        }
        members.push(tree);
    }
    Ok(ModelTreeModel {
        members,
        neighbors: params.neighbors,
        train_x: (params.neighbors > 0).then(|| x.clone()),
        train_y: (params.neighbors > 0).then(|| y.to_vec()),
    })
}

impl ModelTreeModel {
    fn committee_prediction(&self, row: &[f64]) -> f64 {
        self.members.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.members.len() as f64
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let base = self.committee_prediction(row);
        if self.neighbors == 0 {
            return base;
        }
        let (tx, ty) = (
            self.train_x.as_ref().expect("training data kept for blending"),
            self.train_y.as_ref().expect("training data kept for blending"),
        );
        // k nearest training points by Euclidean distance; each contributes
        // its target shifted by the model's local difference, weighted by
        // 1/(d + 0.5).
        let mut dists: Vec<(f64, usize)> = (0..tx.nrows())
            .map(|r| {
                let d2: f64 = tx.row(r).iter().zip(row).map(|(a, b)| (a - b).powi(2)).sum();
                (d2.sqrt(), r)
            })
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        let k = self.neighbors.min(dists.len());
        let mut num = 0.0;
        let mut den = 0.0;
        for &(d, r) in &dists[..k] {
            let w = 1.0 / (d + 0.5);
            num += w * (ty[r] + base - self.committee_prediction(tx.row(r)));
            den += w;
        }
        0.5 * base + 0.5 * (num / den)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn single_member_captures_linear_target() {
        let mut rng = crate::seed::rng(60);
        let train: Vec<Vec<f64>> = (0..100).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let y: Vec<f64> = train.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let x = Matrix::from_rows(&train).unwrap();
        let params = ModelTreeParams {
            committees: 1,
            neighbors: 0,
            ..ModelTreeParams::default()
        };
        let model = fit_model_tree(&x, &y, &params).unwrap();
        let probes: Vec<Vec<f64>> = (0..50).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect();
        let obs: Vec<f64> = probes.iter().map(|r| 2.0 * r[0] + 1.0).collect();
        let preds: Vec<f64> = probes.iter().map(|r| model.predict_row(r)).collect();
        let r2 = crate::metrics::r2(&obs, &preds).unwrap();
        assert!(r2 > 0.99, "test R2 = {r2}");
    }

    #[test]
    fn neighbor_blend_follows_rule_at_training_point() {
        let mut rng = crate::seed::rng(61);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] + r[1] * r[1]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = ModelTreeParams {
            committees: 3,
            neighbors: 1,
            ..ModelTreeParams::default()
        };
        let model = fit_model_tree(&x, &y, &params).unwrap();
        // A probe equal to training row 0: nearest neighbor is itself at
        // distance 0, so the blend is (base + y0) / 2.
        let base = model.committee_prediction(&rows[0]);
        let expected = 0.5 * base + 0.5 * y[0];
        assert_abs_diff_eq!(model.predict_row(&rows[0]), expected, epsilon = 1e-10);
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        let params = ModelTreeParams {
            committees: 5,
            neighbors: 0,
            ..ModelTreeParams::default()
        };
        let model = fit_model_tree(&x, &[2.5; 5], &params).unwrap();
        assert_abs_diff_eq!(model.predict_row(&[1.7]), 2.5, epsilon = 1e-12);
    }

    #[test]
    fn committees_do_not_hurt_training_fit() {
        let (x, y) = crate::synthetic::friedman1(200, 0.3, 62);
        let one = fit_model_tree(
            &x,
            &y,
            &ModelTreeParams {
                committees: 1,
                neighbors: 0,
                ..ModelTreeParams::default()
            },
        )
        .unwrap();
        let ten = fit_model_tree(
            &x,
            &y,
            &ModelTreeParams {
                committees: 10,
                neighbors: 0,
                ..ModelTreeParams::default()
            },
        )
        .unwrap();
        let rmse = |m: &ModelTreeModel| {
            let preds: Vec<f64> = (0..x.nrows()).map(|r| m.predict_row(x.row(r))).collect();
            crate::metrics::rmse(&y, &preds).unwrap()
        };
        assert!(rmse(&ten) <= rmse(&one) * 1.2);
    }
}
