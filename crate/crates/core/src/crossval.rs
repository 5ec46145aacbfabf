//! K-fold cross-validation over any learner: out-of-fold predictions,
//! per-fold models retained for uncertainty mapping, and paired
//! algorithm comparisons.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gasel::FeatureMask;
use crate::learners::{self, LearnerSpec, TrainedModel};
use crate::metrics::{self, FoldedMetrics, MetricsReport};
use crate::samples::{FoldAssignment, SampleTable};
use crate::seed;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CvRun {
    pub spec: LearnerSpec,
    pub mask: FeatureMask,
    pub folds: FoldAssignment,
    pub fold_models: Vec<TrainedModel>,
    /// One out-of-fold prediction per row, on the original target scale.
    pub fold_predictions: Vec<f64>,
    pub metrics: FoldedMetrics,
}

/// Metrics that tolerate a constant observed vector (R2 is undefined
/// there; reported as 0).
fn fold_metrics(observed: &[f64], predicted: &[f64]) -> Result<MetricsReport> {
    let r2 = metrics::r2(observed, predicted).unwrap_or(0.0);
    Ok(MetricsReport {
        mae: metrics::mae(observed, predicted)?,
        rmse: metrics::rmse(observed, predicted)?,
        r2,
        ccc: metrics::ccc(observed, predicted)?,
        n: observed.len(),
    })
}

/// Optional nested tuning inside each training fold: (budget, inner_k).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedTune {
    pub budget: usize,
    pub inner_k: usize,
}

pub fn cross_validate(
    table: &SampleTable,
    mask: &FeatureMask,
    spec: &LearnerSpec,
    folds: &FoldAssignment,
) -> Result<CvRun> {
    cross_validate_with(table, mask, spec, folds, None)
}

pub fn cross_validate_with(
    table: &SampleTable,
    mask: &FeatureMask,
    spec: &LearnerSpec,
    folds: &FoldAssignment,
    nested: Option<NestedTune>,
) -> Result<CvRun> {
    let n = table.n();
    if folds.fold_of.len() != n {
        return Err(Error::Shape(format!(
            "fold assignment covers {} rows, table has {n}",
            folds.fold_of.len()
        )));
    }
    mask.check(table.p())?;
    spec.validate()?;

    let selected = mask.selected_indices();
    let x = table.covariate_matrix().select_cols(&selected);
    let names: Vec<String> = selected
        .iter()
        .map(|&c| table.feature_names[c].clone())
        .collect();
    let y = table.targets();

    let fold_results: Vec<Result<(TrainedModel, Vec<usize>, Vec<f64>)>> = (0..folds.k)
        .into_par_iter()
        .map(|fold| {
            let train = folds.training_indices(fold);
            let val = folds.validation_indices(fold);
            if train.len() < 5 {
                return Err(Error::InsufficientData(format!(
                    "fold {fold} leaves only {} training rows",
                    train.len()
                )));
            }
            let xt = x.select_rows(&train);
            let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
            let fold_spec = LearnerSpec {
                params: spec.params.clone(),
                seed: seed::derive(spec.seed, "cv-fold", fold as u64),
            };
            let fold_spec = match nested {
                Some(t) => {
                    let tuned = learners::tune(
                        fold_spec.algorithm(),
                        &xt,
                        &yt,
                        t.budget,
                        t.inner_k,
                        fold_spec.seed,
                    )?;
                    LearnerSpec {
                        params: tuned.params,
                        seed: fold_spec.seed,
                    }
                }
                None => fold_spec,
            };
            let model = learners::fit(&fold_spec, &xt, &yt, &names)?;
            let xv = x.select_rows(&val);
            let preds = model.predict(&xv)?;
            Ok((model, val, preds))
        })
        .collect();

    let mut fold_models = Vec::with_capacity(folds.k);
    let mut oof = vec![f64::NAN; n];
    let mut per_fold = Vec::with_capacity(folds.k);
    for result in fold_results {
        let (model, val, preds) = result?;
        let mut obs_bt = Vec::with_capacity(val.len());
        let mut pred_bt = Vec::with_capacity(val.len());
        for (i, &r) in val.iter().enumerate() {
            let p = table.transform.back_transform(preds[i]);
            oof[r] = p;
            pred_bt.push(p);
            obs_bt.push(table.transform.back_transform(y[r]));
        }
        per_fold.push(fold_metrics(&obs_bt, &pred_bt)?);
        fold_models.push(model);
    }

    Ok(CvRun {
        spec: spec.clone(),
        mask: mask.clone(),
        folds: folds.clone(),
        fold_models,
        fold_predictions: oof,
        metrics: metrics::aggregate_folds(&per_fold)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub algorithm: String,
    pub metrics: FoldedMetrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Index of the best row: lowest mean RMSE, ties broken by higher CCC.
    pub best: usize,
}

pub fn compare(
    table: &SampleTable,
    mask: &FeatureMask,
    specs: &[LearnerSpec],
    folds: &FoldAssignment,
) -> Result<Comparison> {
    if specs.is_empty() {
        return Err(Error::Config("compare: no learner specs given".into()));
    }
    let mut rows = Vec::with_capacity(specs.len());
    for spec in specs {
        let run = cross_validate(table, mask, spec, folds)?;
        rows.push(ComparisonRow {
            algorithm: spec.algorithm().name().to_string(),
            metrics: run.metrics,
        });
    }
    let mut best = 0usize;
    for (i, row) in rows.iter().enumerate().skip(1) {
        let b = &rows[best].metrics.mean;
        let c = &row.metrics.mean;
        if c.rmse < b.rmse || (c.rmse == b.rmse && c.ccc > b.ccc) {
            best = i;
        }
    }
    Ok(Comparison { rows, best })
}

impl CvRun {
    /// Persists the run as a directory: folds.json, model_fold_{i}.bin,
    /// oof_predictions.csv, metrics.json.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let folds_file = std::fs::File::create(dir.join("folds.json"))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(folds_file), &self.folds)?;
        for (i, model) in self.fold_models.iter().enumerate() {
            model.save(&dir.join(format!("model_fold_{i}.bin")))?;
        }
        let mut w = csv::Writer::from_path(dir.join("oof_predictions.csv"))?;
        w.write_record(["row", "fold", "prediction"])?;
        for (r, p) in self.fold_predictions.iter().enumerate() {
            w.write_record(&[
                r.to_string(),
                self.folds.fold_of[r].to_string(),
                format!("{p}"),
            ])?;
        }
        w.flush()?;
        #[derive(Serialize)]
        struct MetricsFile<'a> {
            spec: &'a LearnerSpec,
            mask: &'a FeatureMask,
            metrics: &'a FoldedMetrics,
        }
        let metrics_file = std::fs::File::create(dir.join("metrics.json"))?;
        serde_json::to_writer_pretty(
            std::io::BufWriter::new(metrics_file),
            &MetricsFile {
                spec: &self.spec,
                mask: &self.mask,
                metrics: &self.metrics,
            },
        )?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use crate::learners::{LearnerParams, ModelTreeParams, RfParams};
    use crate::samples::{assign_folds, SampleRow, TransformTag};
    use approx::assert_abs_diff_eq;

    fn table_from(x: &Matrix, y: &[f64]) -> SampleTable {
        let rows: Vec<SampleRow> = (0..x.nrows())
            .map(|r| SampleRow {
                id: format!("s{r}"),
                x: r as f64,
                y: 0.0,
                target: y[r],
                covariates: x.row(r).to_vec(),
            })
            .collect();
        SampleTable {
            rows,
            feature_names: (0..x.ncols()).map(|c| format!("f{c}")).collect(),
            target_name: "target".into(),
            transform: TransformTag::Identity,
        }
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
    fn partition_is_exact() {
        let (x, y) = crate::synthetic::friedman1(103, 0.3, 90);
        let table = table_from(&x, &y);
        let folds = assign_folds(&table, 10, 4).unwrap();
        let run = cross_validate(&table, &FeatureMask::all(10), &rf_spec(1), &folds).unwrap();
        let mut seen = vec![false; table.n()];
        for fold in 0..10 {
            for r in run.folds.validation_indices(fold) {
                assert!(!seen[r], "row {r} in two validation sets");
                seen[r] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
        let sizes = run.folds.fold_sizes();
        let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        assert!(hi - lo <= 1);
        assert!(run.fold_predictions.iter().all(|p| p.is_finite()));
    }

    #[test]
    fn memorizer_does_not_leak_across_duplicate_rows() {
        // Duplicate rows with different noise: a depth-unlimited committee
        // member memorizes its training rows, but out-of-fold R2 stays < 1.
        let mut rng = crate::seed::rng(91);
        use rand::Rng;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..30 {
            let v: f64 = rng.gen_range(-1.0..1.0);
            for _ in 0..2 {
                rows.push(vec![v]);
                y.push(v + rng.gen_range(-0.3..0.3));
            }
        }
        let x = Matrix::from_rows(&rows).unwrap();
        let table = table_from(&x, &y);
        let folds = assign_folds(&table, 10, 5).unwrap();
        let spec = LearnerSpec::new(
            LearnerParams::ModelTree(ModelTreeParams {
                committees: 1,
                neighbors: 0,
                min_leaf: 1,
                max_depth: 30,
            }),
            2,
        );
        let run = cross_validate(&table, &FeatureMask::all(1), &spec, &folds).unwrap();
        assert!(run.metrics.mean.r2 < 1.0 - 1e-6);
    }

    #[test]
    fn constant_target_gives_zero_rmse() {
        let mut rng = crate::seed::rng(92);
        use rand::Rng;
        let rows: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen::<f64>()]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let table = table_from(&x, &[3.0; 60]);
        let folds = assign_folds(&table, 5, 6).unwrap();
        let spec = LearnerSpec::new(
            LearnerParams::ModelTree(ModelTreeParams::default()),
            3,
        );
        let run = cross_validate(&table, &FeatureMask::all(1), &spec, &folds).unwrap();
        assert_abs_diff_eq!(run.metrics.mean.rmse, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn compare_ranks_forest_over_weak_baseline() {
        let (x, y) = crate::synthetic::friedman1(200, 0.5, 93);
        let table = table_from(&x, &y);
        let folds = assign_folds(&table, 5, 7).unwrap();
        // A nearly-constant learner: SVR with a tiny penalty stays at the bias.
        let weak = LearnerSpec::new(
            LearnerParams::Svr(crate::learners::SvrParams {
                c: 0.01,
                ..crate::learners::SvrParams::default()
            }),
            4,
        );
        let cmp = compare(&table, &FeatureMask::all(10), &[weak, rf_spec(4)], &folds).unwrap();
        assert_eq!(cmp.best, 1);
        let weak_row = &cmp.rows[0].metrics.mean;
        let rf_row = &cmp.rows[1].metrics.mean;
        assert!(rf_row.rmse < weak_row.rmse);
        assert!(rf_row.mae < weak_row.mae);
        assert!(rf_row.r2 > weak_row.r2);
        assert!(rf_row.ccc > weak_row.ccc);
    }

    #[test]
    fn same_spec_twice_gives_identical_rows() {
        let (x, y) = crate::synthetic::friedman1(80, 0.3, 94);
        let table = table_from(&x, &y);
        let folds = assign_folds(&table, 5, 8).unwrap();
        let cmp = compare(
            &table,
            &FeatureMask::all(10),
            &[rf_spec(5), rf_spec(5)],
            &folds,
        )
        .unwrap();
        assert_eq!(
            cmp.rows[0].metrics.mean.rmse.to_bits(),
            cmp.rows[1].metrics.mean.rmse.to_bits()
        );
    }

    #[test]
    fn fold_model_ignores_its_own_validation_rows() {
        let (x, y) = crate::synthetic::friedman1(60, 0.3, 95);
        let table = table_from(&x, &y);
        let folds = assign_folds(&table, 5, 9).unwrap();
        let run = cross_validate(&table, &FeatureMask::all(10), &rf_spec(6), &folds).unwrap();

        // Corrupt one of fold 1's validation targets and refit fold 1 by
        // hand: its model never trains on that row, so predictions must be
        // bit-identical.
        let victim = folds.validation_indices(1)[0];
        let mut y_mut = y.clone();
        y_mut[victim] += 1000.0;
        let train1 = folds.training_indices(1);
        assert!(!train1.contains(&victim));
        let xm = table.covariate_matrix();
        let names = table.feature_names.clone();
        let fold_spec = LearnerSpec {
            params: rf_spec(6).params,
            seed: seed::derive(6, "cv-fold", 1),
        };
        let xt = xm.select_rows(&train1);
        let yt: Vec<f64> = train1.iter().map(|&r| y_mut[r]).collect();
        let refit = learners::fit(&fold_spec, &xt, &yt, &names).unwrap();
        let probe = xm.select_rows(&folds.validation_indices(1));
        let a = run.fold_models[1].predict(&probe).unwrap();
        let b = refit.predict(&probe).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn save_dir_writes_all_artifacts() {
        let (x, y) = crate::synthetic::friedman1(50, 0.3, 96);
        let table = table_from(&x, &y);
        let folds = assign_folds(&table, 5, 10).unwrap();
        let run = cross_validate(&table, &FeatureMask::all(10), &rf_spec(7), &folds).unwrap();
        let dir = tempfile::tempdir().unwrap();
        run.save_dir(dir.path()).unwrap();
        assert!(dir.path().join("folds.json").exists());
        assert!(dir.path().join("metrics.json").exists());
        assert!(dir.path().join("oof_predictions.csv").exists());
        for i in 0..5 {
            let loaded = TrainedModel::load(&dir.path().join(format!("model_fold_{i}.bin"))).unwrap();
            let probe = table.covariate_matrix();
            let a = run.fold_models[i].predict(&probe).unwrap();
            let b = loaded.predict(&probe).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }
}
