//! Random forest regression: bootstrap-sampled CART trees with per-split
//! feature sampling, averaged predictions and out-of-bag RMSE.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cart::{fit_tree, RegressionTree, TreeOptions};
use super::spec::RfParams;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub oob_rmse: Option<f64>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

/// Fits `ntree` trees; each tree gets its own seed stream derived from
/// (seed, tree index) so results are identical for any worker count.
pub fn fit_random_forest(x: &Matrix, y: &[f64], params: &RfParams, seed_value: u64) -> Result<ForestModel> {
    let n = x.nrows();
    let p = x.ncols();
    if params.mtry > p {
        return Err(Error::Spec(format!(
            "RF: Mtry = {} exceeds feature count p = {p}",
            params.mtry
        )));
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let fit_one = |t: usize| -> (RegressionTree, Vec<usize>) {
        let mut rng = seed::rng(seed::derive(seed_value, "rf-tree", t as u64));
        let rows: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            all_rows.clone()
        };
        let opts = TreeOptions {
            max_depth: None,
            min_leaf: params.min_leaf,
            mtry: Some(params.mtry),
        };
        let tree = fit_tree(x, y, &rows, &opts, &mut rng);
        (tree, rows)
    };
    let fitted: Vec<(RegressionTree, Vec<usize>)> =
        (0..params.ntree).into_par_iter().map(fit_one).collect();

    // Out-of-bag RMSE: average each row's predictions over trees whose
    // bootstrap sample excluded it.
    let oob_rmse = if params.bootstrap {
        let mut sums = vec![0.0f64; n];
        let mut counts = vec![0usize; n];
        for (tree, rows) in &fitted {
            let mut in_bag = vec![false; n];
            for &r in rows {
                in_bag[r] = true;
            }
            for r in 0..n {
                if !in_bag[r] {
                    sums[r] += tree.predict_row(x.row(r));
                    counts[r] += 1;
                }
            }
        }
        let mut sq = 0.0;
        let mut m = 0usize;
        for r in 0..n {
            if counts[r] > 0 {
                let pred = sums[r] / counts[r] as f64;
                sq += (pred - y[r]).powi(2);
                m += 1;
            }
        }
        if m > 0 { Some((sq / m as f64).sqrt()) } else { None }
    } else {
        None
    };

    Ok(ForestModel {
        trees: fitted.into_iter().map(|(t, _)| t).collect(),
        oob_rmse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::cart::fit_cart;
    use crate::synthetic::friedman1;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    #[test]
    fn single_tree_no_bootstrap_equals_cart() {
        let mut rng = crate::seed::rng(8);
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..3).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] * 2.0 + r[1]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = RfParams {
            ntree: 1,
            mtry: 3,
            min_leaf: 5,
            bootstrap: false,
        };
        let forest = fit_random_forest(&x, &y, &params, 42).unwrap();
        let cart = fit_cart(&x, &y, None, 5);
        for row in rows.iter() {
            assert_abs_diff_eq!(forest.predict_row(row), cart.predict_row(row), epsilon = 1e-12);
        }
    }

    #[test]
    fn friedman1_held_out_r2() {
        let (x, y) = friedman1(600, 0.5, 9);
        let train: Vec<usize> = (0..500).collect();
        let test: Vec<usize> = (500..600).collect();
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let params = RfParams {
            ntree: 300,
            mtry: 4,
            min_leaf: 5,
            bootstrap: true,
        };
        let forest = fit_random_forest(&xt, &yt, &params, 7).unwrap();
        let preds: Vec<f64> = test.iter().map(|&i| forest.predict_row(x.row(i))).collect();
        let obs: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let r2 = crate::metrics::r2(&obs, &preds).unwrap();
        assert!(r2 >= 0.5, "held-out R2 = {r2}");
        assert!(forest.oob_rmse.is_some());
    }

    #[test]
    fn constant_target_predicts_constant() {
        let mut rng = crate::seed::rng(10);
        let rows: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.gen::<f64>()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = RfParams {
            ntree: 20,
            mtry: 1,
            min_leaf: 2,
            bootstrap: true,
        };
        let forest = fit_random_forest(&x, &[4.2; 30], &params, 1).unwrap();
        assert_abs_diff_eq!(forest.predict_row(&[0.5]), 4.2, epsilon = 1e-12);
    }

    #[test]
    fn predictions_bounded_by_target_range() {
        let mut rng = crate::seed::rng(11);
        let rows: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..4).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let y: Vec<f64> = (0..80).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let params = RfParams {
            ntree: 50,
            mtry: 2,
            min_leaf: 3,
            bootstrap: true,
        };
        let forest = fit_random_forest(&x, &y, &params, 3).unwrap();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
        for _ in 0..50 {
            let probe: Vec<f64> = (0..4).map(|_| rng.gen::<f64>()).collect();
            let pred = forest.predict_row(&probe);
            assert!(pred >= lo - 1e-12 && pred <= hi + 1e-12);
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let (x, y) = friedman1(100, 0.5, 12);
        let params = RfParams {
            ntree: 30,
            mtry: 3,
            min_leaf: 5,
            bootstrap: true,
        };
        let a = fit_random_forest(&x, &y, &params, 5).unwrap();
        let b = fit_random_forest(&x, &y, &params, 5).unwrap();
        for r in 0..x.nrows() {
            assert_eq!(a.predict_row(x.row(r)).to_bits(), b.predict_row(x.row(r)).to_bits());
        }
    }
}
