//! Random-search hyperparameter tuning scored by inner k-fold CV RMSE.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::spec::{
    Algorithm, AnnParams, DnnParams, LearnerParams, LearnerSpec, ModelTreeParams, RfParams,
    SvrParams, WeightInit, XgbParams,
};
use super::{fit, TrainedModel};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::seed;

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

/// One uniformly sampled candidate from an algorithm's allowed ranges.
/// Scale-like parameters (C, sigma, eta, learning rate, decay) are sampled
/// log-uniformly.
pub fn sample_spec(algorithm: Algorithm, p: usize, rng: &mut ChaCha8Rng, seed_value: u64) -> LearnerSpec {
    let params = match algorithm {
        Algorithm::Svr => LearnerParams::Svr(SvrParams {
            c: log_uniform(rng, 0.01, 100.0),
            sigma: log_uniform(rng, 0.01, 100.0),
            ..SvrParams::default()
        }),
        Algorithm::Ann => LearnerParams::Ann(AnnParams {
            size: rng.gen_range(1..=10),
            decay: log_uniform(rng, 0.001, 0.05),
            ..AnnParams::default()
        }),
        Algorithm::ModelTree => LearnerParams::ModelTree(ModelTreeParams {
            committees: rng.gen_range(1..=100),
            neighbors: rng.gen_range(0..=9),
            ..ModelTreeParams::default()
        }),
        Algorithm::Rf => LearnerParams::Rf(RfParams {
            mtry: rng.gen_range(1..=30.min(p)),
            ntree: rng.gen_range(100..=3000),
            ..RfParams::default()
        }),
        Algorithm::Xgb => LearnerParams::Xgb(XgbParams {
            max_depth: rng.gen_range(3..=10),
            min_child_weight: rng.gen_range(0.0..=5.0),
            colsample_bytree: rng.gen_range(0.5..=1.0),
            subsample: rng.gen_range(0.5..=1.0),
            eta: log_uniform(rng, 0.01, 0.5),
            ..XgbParams::default()
        }),
        Algorithm::Dnn => LearnerParams::Dnn(DnnParams {
            hidden: rng.gen_range(2..=10),
            size: rng.gen_range(15..=200),
            init: if rng.gen::<bool>() {
                WeightInit::Uniform
            } else {
                WeightInit::HeNormal
            },
            learning_rate: log_uniform(rng, 0.001, 0.05),
            dropout: rng.gen_range(0.2..=0.8),
            ..DnnParams::default()
        }),
    };
    LearnerSpec::new(params, seed_value)
}

/// Inner k-fold CV RMSE for one candidate.
fn cv_rmse(
    spec: &LearnerSpec,
    x: &Matrix,
    y: &[f64],
    inner_k: usize,
    seed_value: u64,
) -> Result<f64> {
    let n = x.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(seed_value, "tune-folds", 0));
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (i, &r) in order.iter().enumerate() {
        fold_of[r] = i % inner_k;
    }
    let mut sq = 0.0;
    let mut m = 0usize;
    for fold in 0..inner_k {
        let train: Vec<usize> = (0..n).filter(|&r| fold_of[r] != fold).collect();
        let val: Vec<usize> = (0..n).filter(|&r| fold_of[r] == fold).collect();
        if val.is_empty() {
            continue;
        }
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
        let names: Vec<String> = (0..x.ncols()).map(|c| format!("f{c}")).collect();
        let model: TrainedModel = fit(spec, &xt, &yt, &names)?;
        let xv = x.select_rows(&val);
        let preds = model.predict(&xv)?;
        for (i, &r) in val.iter().enumerate() {
            sq += (preds[i] - y[r]).powi(2);
            m += 1;
        }
    }
    Ok((sq / m as f64).sqrt())
}

/// Scores explicit candidates; returns (winning index, spec). Ties keep the
/// earlier index.
pub fn tune_candidates(
    candidates: &[LearnerSpec],
    x: &Matrix,
    y: &[f64],
    inner_k: usize,
    seed_value: u64,
) -> Result<(usize, LearnerSpec)> {
    if candidates.is_empty() {
        return Err(Error::Spec("tune: no candidate specs".into()));
    }
    if inner_k < 2 {
        return Err(Error::Spec("tune: inner_k must be at least 2".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for (i, spec) in candidates.iter().enumerate() {
        spec.validate()?;
        let rmse = cv_rmse(spec, x, y, inner_k, seed_value)?;
        if best.map_or(true, |(_, b)| rmse < b) {
            best = Some((i, rmse));
        }
    }
    let (i, _) = best.unwrap();
    Ok((i, candidates[i].clone()))
}

/// Random search: samples `budget` candidates from the algorithm's ranges
/// and returns the one with the lowest inner-CV RMSE.
pub fn tune(
    algorithm: Algorithm,
    x: &Matrix,
    y: &[f64],
    budget: usize,
    inner_k: usize,
    seed_value: u64,
) -> Result<LearnerSpec> {
    if budget < 1 {
        return Err(Error::Spec("tune: budget must be at least 1".into()));
    }
    let mut rng = seed::rng(seed::derive(seed_value, "tune-sample", 0));
    let candidates: Vec<LearnerSpec> = (0..budget)
        .map(|i| {
            sample_spec(
                algorithm,
                x.ncols(),
                &mut rng,
                seed::derive(seed_value, "tune-candidate", i as u64),
            )
        })
        .collect();
    let (_, spec) = tune_candidates(&candidates, x, y, inner_k, seed_value)?;
    Ok(spec)
}
