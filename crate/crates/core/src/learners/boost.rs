//! Gradient boosting with squared loss: depth-limited trees fit to
//! residuals on row/column subsamples, shrunk by a learning rate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::cart::{fit_tree, RegressionTree, TreeOptions};
use super::spec::XgbParams;
use crate::data::Matrix;
use crate::error::Result;
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub init: f64,
    pub eta: f64,
    pub trees: Vec<RegressionTree>,
    /// Training RMSE after each round (round 0 = init only).
    pub loss_curve: Vec<f64>,
}

impl BoostModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.init + self.eta * self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

fn rmse_of(preds: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    (preds
        .iter()
        .zip(y)
        .map(|(p, o)| (p - o).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
}

/// With squared loss every hessian is 1, so `min_child_weight` acts as a
/// minimum leaf sample count (rounded up, floor 1).
pub fn fit_xgb(x: &Matrix, y: &[f64], params: &XgbParams, seed_value: u64) -> Result<BoostModel> {
    let n = x.nrows();
    let p = x.ncols();
    let min_leaf = (params.min_child_weight.ceil() as usize).max(1);

    // Early stopping holdout: last 10% of a seeded shuffle.
    let (train_rows, holdout_rows): (Vec<usize>, Vec<usize>) = if params.early_stopping && n >= 20 {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = seed::rng(seed::derive(seed_value, "xgb-holdout", 0));
        order.shuffle(&mut rng);
        let cut = n - (n / 10).max(1);
        (order[..cut].to_vec(), order[cut..].to_vec())
    } else {
        ((0..n).collect(), Vec::new())
    };

    let train_y_mean = train_rows.iter().map(|&r| y[r]).sum::<f64>() / train_rows.len() as f64;
    let init = train_y_mean;

    let mut preds = vec![init; n];
    let mut trees: Vec<RegressionTree> = Vec::new();
    let mut loss_curve = Vec::with_capacity(params.rounds + 1);
    let train_targets: Vec<f64> = train_rows.iter().map(|&r| y[r]).collect();
    let train_preds_rmse = |preds: &[f64]| {
        let tp: Vec<f64> = train_rows.iter().map(|&r| preds[r]).collect();
        rmse_of(&tp, &train_targets)
    };
    loss_curve.push(train_preds_rmse(&preds));

    let mut best_holdout = f64::INFINITY;
    let mut best_round = 0usize;
    let patience = 25usize;

    let all_features: Vec<usize> = (0..p).collect();
    for round in 0..params.rounds {
        let mut rng = seed::rng(seed::derive(seed_value, "xgb-round", round as u64));
        // Row subsample (without replacement).
        let rows: Vec<usize> = if params.subsample < 1.0 {
            let m = ((train_rows.len() as f64 * params.subsample).round() as usize).max(2 * min_leaf);
            let mut pool = train_rows.clone();
            pool.shuffle(&mut rng);
            pool.truncate(m.min(train_rows.len()));
            pool
        } else {
            train_rows.clone()
        };
        // Column subsample per tree.
        let feature_pool: Vec<usize> = if params.colsample_bytree < 1.0 {
            let m = ((p as f64 * params.colsample_bytree).round() as usize).clamp(1, p);
            let mut pool = all_features.clone();
            pool.shuffle(&mut rng);
            pool.truncate(m);
            pool.sort_unstable();
            pool
        } else {
            all_features.clone()
        };

        let residuals: Vec<f64> = (0..n).map(|r| y[r] - preds[r]).collect();
        let opts = TreeOptions {
            max_depth: Some(params.max_depth),
            min_leaf,
            mtry: None,
        };
        // Restrict the tree to the sampled feature pool by projecting and
        // remapping split indices back to global feature ids.
        let x_proj = x.select_cols(&feature_pool);
        let rows_proj: Vec<usize> = rows.clone();
        let mut tree = fit_tree(&x_proj, &residuals, &rows_proj, &opts, &mut rng);
        for node in &mut tree.nodes {
            if let super::cart::Node::Internal { feature, .. } = node {
                *feature = feature_pool[*feature];
            }
        }

        for r in 0..n {
            preds[r] += params.eta * tree.predict_row(x.row(r));
        }
        trees.push(tree);
        loss_curve.push(train_preds_rmse(&preds));

        if !holdout_rows.is_empty() {
            let hp: Vec<f64> = holdout_rows.iter().map(|&r| preds[r]).collect();
            let hy: Vec<f64> = holdout_rows.iter().map(|&r| y[r]).collect();
            let h_rmse = rmse_of(&hp, &hy);
            if h_rmse < best_holdout - 1e-12 {
                best_holdout = h_rmse;
                best_round = round + 1;
            } else if round + 1 - best_round >= patience {
                trees.truncate(best_round);
                loss_curve.truncate(best_round + 1);
                break;
            }
        }
    }

    Ok(BoostModel {
        init,
        eta: params.eta,
        trees,
        loss_curve,
    })
}
