//! Six regression learners behind one train/predict contract, plus random
//! search tuning and JSON model persistence.

pub mod boost;
pub mod cart;
pub mod dnn;
pub mod forest;
pub mod mlp;
pub mod model_tree;
pub mod spec;
pub mod svr;
pub mod tune;

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use spec::{
    Algorithm, AnnParams, DnnParams, LearnerParams, LearnerSpec, ModelTreeParams, RfParams,
    SvrParams, WeightInit, XgbParams,
};
pub use tune::{tune, tune_candidates};

use crate::data::Matrix;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "soilmap-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedParams {
    Svr(svr::SvrModel),
    Ann(mlp::MlpModel),
    ModelTree(model_tree::ModelTreeModel),
    Rf(forest::ForestModel),
    Xgb(boost::BoostModel),
    Dnn(dnn::DnnModel),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    /// Training loss trajectory for iterative learners; empty otherwise.
    pub loss_curve: Vec<f64>,
    pub fit_seconds: f64,
}

/// Immutable fitted model. Prediction never mutates training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: LearnerSpec,
    pub feature_names: Vec<String>,
    pub fitted: FittedParams,
    pub train_summary: TrainSummary,
}

pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[f64], feature_names: &[String]) -> Result<TrainedModel> {
    spec.validate()?;
    let n = x.nrows();
    let p = x.ncols();
    if n < 5 {
        return Err(Error::InsufficientData(format!(
            "fit needs at least 5 samples, got {n}"
        )));
    }
    if p < 1 {
        return Err(Error::Shape("fit needs at least one feature".into()));
    }
    if y.len() != n {
        return Err(Error::Shape(format!(
            "target length {} does not match {} rows",
            y.len(),
            n
        )));
    }
    if feature_names.len() != p {
        return Err(Error::Shape(format!(
            "{} feature names for {p} columns",
            feature_names.len()
        )));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("fit requires finite inputs and targets".into()));
    }
    if let LearnerParams::Rf(rf) = &spec.params {
        if rf.mtry > p {
            return Err(Error::Spec(format!(
                "RF: Mtry = {} exceeds feature count p = {p}",
                rf.mtry
            )));
        }
    }

    let start = Instant::now();
    let (fitted, loss_curve) = match &spec.params {
        LearnerParams::Svr(params) => {
            let model = svr::fit_svr(x, y, params)?;
            (FittedParams::Svr(model), Vec::new())
        }
        LearnerParams::Ann(params) => {
            let model = mlp::fit_mlp(x, y, params, spec.seed)?;
            let curve = model.loss_curve.clone();
            (FittedParams::Ann(model), curve)
        }
        LearnerParams::ModelTree(params) => {
            let model = model_tree::fit_model_tree(x, y, params)?;
            (FittedParams::ModelTree(model), Vec::new())
        }
        LearnerParams::Rf(params) => {
            let model = forest::fit_random_forest(x, y, params, spec.seed)?;
            (FittedParams::Rf(model), Vec::new())
        }
        LearnerParams::Xgb(params) => {
            let model = boost::fit_xgb(x, y, params, spec.seed)?;
            let curve = model.loss_curve.clone();
            (FittedParams::Xgb(model), curve)
        }
        LearnerParams::Dnn(params) => {
            let model = dnn::fit_dnn(x, y, params, spec.seed)?;
            let curve = model.loss_curve.clone();
            (FittedParams::Dnn(model), curve)
        }
    };

    Ok(TrainedModel {
        spec: spec.clone(),
        feature_names: feature_names.to_vec(),
        fitted,
        train_summary: TrainSummary {
            loss_curve,
            fit_seconds: start.elapsed().as_secs_f64(),
        },
    })
}

impl TrainedModel {
    fn predict_one(&self, row: &[f64]) -> f64 {
        match &self.fitted {
            FittedParams::Svr(m) => m.predict_row(row),
            FittedParams::Ann(m) => m.predict_row(row),
            FittedParams::ModelTree(m) => m.predict_row(row),
            FittedParams::Rf(m) => m.predict_row(row),
            FittedParams::Xgb(m) => m.predict_row(row),
            FittedParams::Dnn(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.nrows() > 0 && x.ncols() != self.feature_names.len() {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.feature_names.len(),
                x.ncols()
            )));
        }
        Ok((0..x.nrows()).map(|r| self.predict_one(x.row(r))).collect())
    }

    /// Prediction with a feature-name check: column names must match the
    /// training names in order.
    pub fn predict_named(&self, x: &Matrix, names: &[String]) -> Result<Vec<f64>> {
        if names != self.feature_names.as_slice() {
            return Err(Error::Shape(format!(
                "feature names {:?} do not match training names {:?}",
                names, self.feature_names
            )));
        }
        self.predict(x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct ModelFile<'a> {
            format: &'a str,
            version: u32,
            model: &'a TrainedModel,
        }
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &ModelFile {
            format: MODEL_FORMAT,
            version: MODEL_VERSION,
            model: self,
        })?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TrainedModel> {
        #[derive(Deserialize)]
        struct ModelFile {
            format: String,
            version: u32,
            model: TrainedModel,
        }
        let file = std::fs::File::open(path)?;
        let parsed: ModelFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        if parsed.format != MODEL_FORMAT {
            return Err(Error::Format {
                line: 0,
                message: format!("unknown model format {:?}", parsed.format),
            });
        }
        if parsed.version != MODEL_VERSION {
            return Err(Error::Format {
                line: 0,
                message: format!(
                    "model version {} unsupported (expected {MODEL_VERSION})",
                    parsed.version
                ),
            });
        }
        Ok(parsed.model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|c| format!("f{c}")).collect()
    }

    fn rf_spec(seed: u64) -> LearnerSpec {
        LearnerSpec::new(
            LearnerParams::Rf(RfParams {
                mtry: 3,
                ntree: 100,
                ..RfParams::default()
            }),
            seed,
        )
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let x = Matrix::from_rows(&vec![vec![1.0; 10]; 4]).unwrap();
        let err = fit(&rf_spec(1), &x, &[1.0; 4], &names(10)).unwrap_err();
        assert!(matches!(err, Error::InsufficientData(_)));
    }

    #[test]
    fn mtry_above_p_is_a_spec_error() {
        let (x, y) = crate::synthetic::friedman1(30, 0.2, 80);
        let spec = LearnerSpec::new(
            LearnerParams::Rf(RfParams {
                mtry: 30,
                ntree: 100,
                ..RfParams::default()
            }),
            1,
        );
        let err = fit(&spec, &x, &y, &names(10)).unwrap_err();
        assert!(matches!(err, Error::Spec(_)));
    }

    #[test]
    fn same_seed_gives_identical_predictions() {
        let (x, y) = crate::synthetic::friedman1(60, 0.3, 81);
        let a = fit(&rf_spec(7), &x, &y, &names(10)).unwrap();
        let b = fit(&rf_spec(7), &x, &y, &names(10)).unwrap();
        let pa = a.predict(&x).unwrap();
        let pb = b.predict(&x).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn overfit_tree_memorizes_training_targets() {
        let (x, y) = crate::synthetic::friedman1(40, 0.3, 82);
        let tree = cart::fit_cart(&x, &y, None, 1);
        for r in 0..x.nrows() {
            assert_abs_diff_eq!(tree.predict_row(x.row(r)), y[r], epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_probe_gives_empty_predictions() {
        let (x, y) = crate::synthetic::friedman1(30, 0.2, 83);
        let model = fit(&rf_spec(2), &x, &y, &names(10)).unwrap();
        let empty = Matrix::zeros(0, 10);
        assert!(model.predict(&empty).unwrap().is_empty());
    }

    #[test]
    fn width_and_name_mismatches_are_shape_errors() {
        let (x, y) = crate::synthetic::friedman1(30, 0.2, 84);
        let model = fit(&rf_spec(3), &x, &y, &names(10)).unwrap();
        let narrow = Matrix::zeros(2, 4);
        assert!(matches!(model.predict(&narrow), Err(Error::Shape(_))));
        let mut permuted = names(10);
        permuted.swap(0, 1);
        assert!(matches!(model.predict_named(&x, &permuted), Err(Error::Shape(_))));
    }

    #[test]
    fn non_finite_input_is_a_data_error() {
        let mut x = Matrix::zeros(6, 2);
        x.set(3, 1, f64::NAN);
        let err = fit(&rf_spec(1), &x, &[1.0; 6], &names(2)).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn save_load_predict_is_bit_identical() {
        let (x, y) = crate::synthetic::friedman1(50, 0.3, 85);
        let dir = tempfile::tempdir().unwrap();
        for spec in [
            rf_spec(4),
            LearnerSpec::new(LearnerParams::Svr(SvrParams::default()), 4),
            LearnerSpec::new(
                LearnerParams::Ann(AnnParams {
                    epochs: 100,
                    ..AnnParams::default()
                }),
                4,
            ),
            LearnerSpec::new(
                LearnerParams::ModelTree(ModelTreeParams {
                    committees: 3,
                    neighbors: 2,
                    ..ModelTreeParams::default()
                }),
                4,
            ),
            LearnerSpec::new(
                LearnerParams::Xgb(XgbParams {
                    rounds: 30,
                    early_stopping: false,
                    ..XgbParams::default()
                }),
                4,
            ),
            LearnerSpec::new(
                LearnerParams::Dnn(DnnParams {
                    epochs: 10,
                    size: 16,
                    ..DnnParams::default()
                }),
                4,
            ),
        ] {
            let model = fit(&spec, &x, &y, &names(10)).unwrap();
            let path = dir.path().join(format!("{}.json", spec.algorithm().name()));
            model.save(&path).unwrap();
            let loaded = TrainedModel::load(&path).unwrap();
            let before = model.predict(&x).unwrap();
            let after = loaded.predict(&x).unwrap();
            for (u, v) in before.iter().zip(&after) {
                assert_eq!(u.to_bits(), v.to_bits(), "{}", spec.algorithm().name());
            }
        }
    }

    #[test]
    fn wrong_format_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, r#"{"format":"other","version":1,"model":null}"#).unwrap();
        assert!(TrainedModel::load(&path).is_err());
    }
}
