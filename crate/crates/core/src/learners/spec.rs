//! Learner configuration: per-algorithm hyperparameters and their
//! allowed ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    Svr,
    Ann,
    ModelTree,
    Rf,
    Xgb,
    Dnn,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Svr => "SVR",
            Algorithm::Ann => "ANN",
            Algorithm::ModelTree => "ModelTree",
            Algorithm::Rf => "RF",
            Algorithm::Xgb => "XGB",
            Algorithm::Dnn => "DNN",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvrParams {
    /// Penalty parameter, 0.01-100.
    pub c: f64,
    /// RBF bandwidth, 0.01-100.
    pub sigma: f64,
    /// Epsilon tube half-width on the standardized target scale.
    pub epsilon: f64,
    pub max_iter: usize,
    /// KKT violation tolerance.
    pub tol: f64,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 1.0,
            sigma: 1.0,
            epsilon: 0.1,
            max_iter: 100_000,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnParams {
    /// Hidden layer width, 1-10.
    pub size: usize,
    /// Weight decay, 0.001-0.05.
    pub decay: f64,
    pub epochs: usize,
    /// Full-batch gradient descent step size.
    pub step: f64,
}

impl Default for AnnParams {
    fn default() -> Self {
        AnnParams {
            size: 5,
            decay: 0.01,
            epochs: 2000,
            step: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelTreeParams {
    /// Committee members, 1-100.
    pub committees: usize,
    /// Nearest-neighbor blending count, 0-9.
    pub neighbors: usize,
    pub min_leaf: usize,
    pub max_depth: usize,
}

impl Default for ModelTreeParams {
    fn default() -> Self {
        ModelTreeParams {
            committees: 10,
            neighbors: 0,
            min_leaf: 10,
            max_depth: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    /// Features considered per split, 1-30.
    pub mtry: usize,
    /// Number of trees, 100-3000.
    pub ntree: usize,
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        RfParams {
            mtry: 5,
            ntree: 500,
            min_leaf: 5,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XgbParams {
    /// Tree depth, 3-10.
    pub max_depth: usize,
    /// Minimum sum of hessians per leaf; squared loss makes this a
    /// minimum leaf sample count, 0-5.
    pub min_child_weight: f64,
    /// Feature fraction per tree, 0.5-1.
    pub colsample_bytree: f64,
    /// Row fraction per tree, 0.5-1.
    pub subsample: f64,
    /// Learning rate, 0.01-0.5.
    pub eta: f64,
    pub rounds: usize,
    /// Early stopping on a 10% internal holdout, patience 25.
    pub early_stopping: bool,
}

impl Default for XgbParams {
    fn default() -> Self {
        XgbParams {
            max_depth: 6,
            min_child_weight: 1.0,
            colsample_bytree: 1.0,
            subsample: 1.0,
            eta: 0.1,
            rounds: 500,
            early_stopping: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    Uniform,
    HeNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DnnParams {
    /// Hidden layer count, 2-10.
    pub hidden: usize,
    /// Neurons per hidden layer, 15-200.
    pub size: usize,
    pub init: WeightInit,
    /// SGD step size, 0.001-0.05.
    pub learning_rate: f64,
    /// Inverted-dropout rate, 0.2-0.8.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for DnnParams {
    fn default() -> Self {
        DnnParams {
            hidden: 3,
            size: 32,
            init: WeightInit::HeNormal,
            learning_rate: 0.01,
            dropout: 0.2,
            epochs: 200,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnerParams {
    Svr(SvrParams),
    Ann(AnnParams),
    ModelTree(ModelTreeParams),
    Rf(RfParams),
    Xgb(XgbParams),
    Dnn(DnnParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub params: LearnerParams,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(params: LearnerParams, seed: u64) -> Self {
        LearnerSpec { params, seed }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.params {
            LearnerParams::Svr(_) => Algorithm::Svr,
            LearnerParams::Ann(_) => Algorithm::Ann,
            LearnerParams::ModelTree(_) => Algorithm::ModelTree,
            LearnerParams::Rf(_) => Algorithm::Rf,
            LearnerParams::Xgb(_) => Algorithm::Xgb,
            LearnerParams::Dnn(_) => Algorithm::Dnn,
        }
    }

    /// Checks every hyperparameter against its allowed range.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str, range: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Spec(format!(
                    "{}: {what} outside allowed range {range}",
                    self.algorithm().name()
                )))
            }
        };
        match &self.params {
            LearnerParams::Svr(p) => {
                check((0.01..=100.0).contains(&p.c), "C", "0.01-100")?;
                check((0.01..=100.0).contains(&p.sigma), "sigma", "0.01-100")?;
                check(p.epsilon > 0.0, "epsilon", "> 0")?;
            }
            LearnerParams::Ann(p) => {
                check((1..=10).contains(&p.size), "size", "1-10")?;
                check((0.001..=0.05).contains(&p.decay), "decay", "0.001-0.05")?;
                check(p.step > 0.0, "step", "> 0")?;
            }
            LearnerParams::ModelTree(p) => {
                check((1..=100).contains(&p.committees), "committees", "1-100")?;
                check(p.neighbors <= 9, "neighbors", "0-9")?;
                check(p.min_leaf >= 1, "min_leaf", ">= 1")?;
            }
            LearnerParams::Rf(p) => {
                check((1..=30).contains(&p.mtry), "Mtry", "1-30")?;
                check((100..=3000).contains(&p.ntree), "Ntree", "100-3000")?;
                check(p.min_leaf >= 1, "min_leaf", ">= 1")?;
            }
            LearnerParams::Xgb(p) => {
                check((3..=10).contains(&p.max_depth), "max_depth", "3-10")?;
                check(
                    (0.0..=5.0).contains(&p.min_child_weight),
                    "min_child_weight",
                    "0-5",
                )?;
                check(
                    (0.5..=1.0).contains(&p.colsample_bytree),
                    "colsample_bytree",
                    "0.5-1",
                )?;
                check((0.5..=1.0).contains(&p.subsample), "subsample", "0.5-1")?;
                check((0.01..=0.5).contains(&p.eta), "eta", "0.01-0.5")?;
                check(p.rounds >= 1, "rounds", ">= 1")?;
            }
            LearnerParams::Dnn(p) => {
                check((2..=10).contains(&p.hidden), "hidden", "2-10")?;
                check((15..=200).contains(&p.size), "size", "15-200")?;
                check(
                    (0.001..=0.05).contains(&p.learning_rate),
                    "learning_rate",
                    "0.001-0.05",
                )?;
                check((0.2..=0.8).contains(&p.dropout), "dropout", "0.2-0.8")?;
                check(p.batch_size >= 1, "batch_size", ">= 1")?;
            }
        }
        Ok(())
    }
}
