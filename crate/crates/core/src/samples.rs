//! Point-sample ingestion, descriptive statistics, target transform and
//! cross-validation fold assignment.

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::{seed, stats};

/// Sentinel for a missing covariate value (empty CSV cell or "NA").
pub const MISSING: f64 = f64::NAN;

pub fn is_missing(v: f64) -> bool {
    v.is_nan()
}

/// Whether the target column currently holds transformed values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransformTag {
    Identity,
    /// y' = ln(y + offset); back-transform y = exp(y') - offset.
    LogAnchored { offset: f64 },
}

impl TransformTag {
    pub fn log_default() -> Self {
        TransformTag::LogAnchored { offset: 1.0 }
    }

    /// Maps a model-scale prediction back to the original scale.
    pub fn back_transform(&self, value: f64) -> f64 {
        match self {
            TransformTag::Identity => value,
            TransformTag::LogAnchored { offset } => value.exp() - offset,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleRow {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub target: f64,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleTable {
    pub rows: Vec<SampleRow>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub transform: TransformTag,
}

/// Column-name configuration for `load_samples`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub id: String,
    pub x: String,
    pub y: String,
    pub target: String,
    /// Explicit covariate columns; when absent, all remaining columns are used.
    #[serde(default)]
    pub features: Option<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub n: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub sd: f64,
    pub cv: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub ks_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
    pub seed: u64,
}

impl SampleTable {
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.feature_names.len()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.target).collect()
    }

    pub fn covariate_matrix(&self) -> Matrix {
        let rows: Vec<Vec<f64>> = self.rows.iter().map(|r| r.covariates.clone()).collect();
        Matrix::from_rows(&rows).expect("table invariant: uniform covariate width")
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    /// New table holding only the given rows (same features and transform).
    pub fn subset(&self, rows: &[usize]) -> SampleTable {
        SampleTable {
            rows: rows.iter().map(|&r| self.rows[r].clone()).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            transform: self.transform,
        }
    }

    fn validate(&self) -> Result<()> {
        let p = self.feature_names.len();
        let mut names = HashSet::new();
        for f in &self.feature_names {
            if !names.insert(f.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name '{f}'")));
            }
        }
        let mut ids = HashSet::new();
        for row in &self.rows {
            if row.covariates.len() != p {
                return Err(Error::Shape(format!(
                    "row '{}' has {} covariates, expected {p}",
                    row.id,
                    row.covariates.len()
                )));
            }
            if !row.target.is_finite() {
                return Err(Error::Data(format!("non-finite target in row '{}'", row.id)));
            }
            if !ids.insert(row.id.as_str()) {
                return Err(Error::DuplicateId(row.id.clone()));
            }
        }
        Ok(())
    }
}

/// Loads a sample table from a UTF-8, comma-separated CSV with a header row.
pub fn load_samples(path: &Path, schema: &ColumnSchema) -> Result<SampleTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();

    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column '{name}'")))
    };
    let id_col = col(&schema.id)?;
    let x_col = col(&schema.x)?;
    let y_col = col(&schema.y)?;
    let target_col = col(&schema.target)?;

    let feature_names: Vec<String> = match &schema.features {
        Some(list) => {
            for f in list {
                col(f)?;
            }
            list.clone()
        }
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id_col, x_col, y_col, target_col].contains(i))
            .map(|(_, h)| h.clone())
            .collect(),
    };
    let feature_cols: Vec<usize> = feature_names
        .iter()
        .map(|f| col(f).expect("feature columns verified above"))
        .collect();

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = i + 1;
        let field = |c: usize| record.get(c).unwrap_or("").trim();
        let parse_num = |c: usize, what: &str| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| Error::Parse {
                row: row_no,
                message: format!("non-numeric {what} value '{}'", field(c)),
            })
        };
        let target = parse_num(target_col, "target")?;
        let covariates = feature_cols
            .iter()
            .map(|&c| {
                let raw = field(c);
                if raw.is_empty() || raw.eq_ignore_ascii_case("na") {
                    Ok(MISSING)
                } else {
                    parse_num(c, "covariate")
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(SampleRow {
            id: field(id_col).to_owned(),
            x: parse_num(x_col, "x")?,
            y: parse_num(y_col, "y")?,
            target,
            covariates,
        });
    }

    let table = SampleTable {
        rows,
        feature_names,
        target_name: schema.target.clone(),
        transform: TransformTag::Identity,
    };
    table.validate()?;
    Ok(table)
}

/// Descriptive statistics of the target column.
///
/// Normality is assessed with a one-sample Kolmogorov-Smirnov test of the
/// standardized values against the standard normal distribution.
pub fn describe(table: &SampleTable) -> Result<DescriptiveStats> {
    let values = table.targets();
    let n = values.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "descriptive statistics need n >= 3, got {n}"
        )));
    }
    let mean = stats::mean(&values);
    let sd = stats::sample_sd(&values);
    let cv = if mean != 0.0 { 100.0 * sd / mean } else { f64::NAN };
    let z: Vec<f64> = if sd > 0.0 {
        values.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; n]
    };
    Ok(DescriptiveStats {
        n,
        min: values.iter().cloned().fold(f64::INFINITY, f64::min),
        max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        mean,
        sd,
        cv,
        skewness: stats::skewness(&values),
        kurtosis: stats::excess_kurtosis(&values),
        ks_p: stats::ks_normal_p(&z),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    Forward,
    Backward,
}

/// Applies or reverses the log-anchor target transform: y' = ln(y + offset).
pub fn transform_target(
    table: &SampleTable,
    direction: TransformDirection,
    offset: f64,
) -> Result<SampleTable> {
    let mut out = table.clone();
    match direction {
        TransformDirection::Forward => {
            if table.transform != TransformTag::Identity {
                return Err(Error::State("target is already transformed".into()));
            }
            for row in &mut out.rows {
                if row.target <= -offset {
                    return Err(Error::Domain(format!(
                        "target {} in row '{}' is not > {}",
                        row.target, row.id, -offset
                    )));
                }
                row.target = (row.target + offset).ln();
            }
            out.transform = TransformTag::LogAnchored { offset };
        }
        TransformDirection::Backward => {
            let tag_offset = match table.transform {
                TransformTag::LogAnchored { offset } => offset,
                TransformTag::Identity => {
                    return Err(Error::State(
                        "backward transform on an untransformed table".into(),
                    ))
                }
            };
            for row in &mut out.rows {
                row.target = row.target.exp() - tag_offset;
            }
            out.transform = TransformTag::Identity;
        }
    }
    Ok(out)
}

/// Uniform random k-fold partition; deterministic for a fixed seed.
pub fn assign_folds(table: &SampleTable, k: usize, seed: u64) -> Result<FoldAssignment> {
    let n = table.n();
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds sample count n = {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seed::rng(seed::derive(seed, "fold-assignment", 0));
    order.shuffle(&mut rng);
    let mut fold_of = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        fold_of[row] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of, seed })
}

impl FoldAssignment {
    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Replaces missing covariates with the column median over non-missing values.
pub fn impute_missing(table: &SampleTable) -> Result<SampleTable> {
    let p = table.p();
    let mut out = table.clone();
    for c in 0..p {
        let mut present: Vec<f64> = table
            .rows
            .iter()
            .map(|r| r.covariates[c])
            .filter(|v| !is_missing(*v))
            .collect();
        if table.rows.iter().any(|r| is_missing(r.covariates[c])) {
            if present.is_empty() {
                return Err(Error::Imputation(table.feature_names[c].clone()));
            }
            present.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let m = present.len();
            let median = if m % 2 == 1 {
                present[m / 2]
            } else {
                0.5 * (present[m / 2 - 1] + present[m / 2])
            };
            for row in &mut out.rows {
                if is_missing(row.covariates[c]) {
                    row.covariates[c] = median;
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn schema() -> ColumnSchema {
        ColumnSchema {
            id: "id".into(),
            x: "x".into(),
            y: "y".into(),
            target: "soc".into(),
            features: None,
        }
    }

    fn toy_table(targets: &[f64]) -> SampleTable {
        SampleTable {
            rows: targets
                .iter()
                .enumerate()
                .map(|(i, &t)| SampleRow {
                    id: format!("s{i}"),
                    x: i as f64,
                    y: 0.0,
                    target: t,
                    covariates: vec![i as f64],
                })
                .collect(),
            feature_names: vec!["b1".into()],
            target_name: "soc".into(),
            transform: TransformTag::Identity,
        }
    }

    #[test]
    fn load_reads_back_rows_and_features() {
        let f = write_csv("id,x,y,soc,b1\ns1,0,0,1.2,5\ns2,1,0,2.4,6\ns3,2,0,0.8,7\n");
        let t = load_samples(f.path(), &schema()).unwrap();
        assert_eq!(t.n(), 3);
        assert_eq!(t.feature_names, vec!["b1"]);
        assert_abs_diff_eq!(t.rows[1].target, 2.4);
    }

    #[test]
    fn duplicate_id_is_reported() {
        let f = write_csv("id,x,y,soc,b1\ns1,0,0,1.2,5\ns1,1,0,2.4,6\n");
        let err = load_samples(f.path(), &schema()).unwrap_err();
        assert!(matches!(err, Error::DuplicateId(ref id) if id == "s1"));
    }

    #[test]
    fn bad_target_cites_row() {
        let f = write_csv("id,x,y,soc,b1\ns1,0,0,1.2,5\ns2,1,0,abc,6\n");
        let err = load_samples(f.path(), &schema()).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 2, .. }));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = write_csv("id,x,y,b1\ns1,0,0,5\n");
        assert!(matches!(
            load_samples(f.path(), &schema()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn describe_hand_values() {
        let s = describe(&toy_table(&[1.0, 2.0, 3.0])).unwrap();
        assert_abs_diff_eq!(s.mean, 2.0);
        assert_abs_diff_eq!(s.sd, 1.0);
        assert_abs_diff_eq!(s.cv, 50.0);
        assert_abs_diff_eq!(s.skewness, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn describe_symmetric_has_zero_skew() {
        let s = describe(&toy_table(&[-3.0, 0.0, 3.0])).unwrap();
        assert_abs_diff_eq!(s.skewness, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn describe_needs_three_rows() {
        assert!(matches!(
            describe(&toy_table(&[1.0, 2.0])),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn describe_is_permutation_invariant() {
        let a = describe(&toy_table(&[0.4, 2.0, 3.5, 1.1, 0.9])).unwrap();
        let b = describe(&toy_table(&[3.5, 0.9, 0.4, 1.1, 2.0])).unwrap();
        assert_abs_diff_eq!(a.mean, b.mean, epsilon = 1e-12);
        assert_abs_diff_eq!(a.sd, b.sd, epsilon = 1e-12);
        assert_abs_diff_eq!(a.skewness, b.skewness, epsilon = 1e-12);
        assert_abs_diff_eq!(a.kurtosis, b.kurtosis, epsilon = 1e-12);
        assert_abs_diff_eq!(a.ks_p, b.ks_p, epsilon = 1e-12);
    }

    #[test]
    fn transform_known_points() {
        let t = toy_table(&[0.0, std::f64::consts::E - 1.0, 1.0]);
        let fwd = transform_target(&t, TransformDirection::Forward, 1.0).unwrap();
        assert_abs_diff_eq!(fwd.rows[0].target, 0.0);
        assert_abs_diff_eq!(fwd.rows[1].target, 1.0, epsilon = 1e-12);
        let back = transform_target(&fwd, TransformDirection::Backward, 1.0).unwrap();
        for (orig, round) in t.rows.iter().zip(back.rows.iter()) {
            assert_abs_diff_eq!(orig.target, round.target, epsilon = 1e-12);
        }
    }

    #[test]
    fn transform_errors() {
        let t = toy_table(&[-2.0, 1.0, 2.0]);
        assert!(matches!(
            transform_target(&t, TransformDirection::Forward, 1.0),
            Err(Error::Domain(_))
        ));
        let t2 = toy_table(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            transform_target(&t2, TransformDirection::Backward, 1.0),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn transform_reduces_lognormal_skew() {
        use rand_distr::{Distribution, LogNormal};
        let mut rng = crate::seed::rng(11);
        let dist = LogNormal::new(0.5, 0.7).unwrap();
        let values: Vec<f64> = (0..2000).map(|_| dist.sample(&mut rng)).collect();
        let raw_skew = stats::skewness(&values);
        assert!(raw_skew > 2.0, "fixture skewness {raw_skew}");
        let t = toy_table(&values);
        let fwd = transform_target(&t, TransformDirection::Forward, 1.0).unwrap();
        let transformed_skew = stats::skewness(&fwd.targets());
        assert!(transformed_skew < 1.0, "transformed skewness {transformed_skew}");
    }

    #[test]
    fn folds_partition_rows() {
        let t = toy_table(&(0..23).map(|i| i as f64).collect::<Vec<_>>());
        let f = assign_folds(&t, 10, 99).unwrap();
        let sizes = f.fold_sizes();
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(sizes.iter().all(|&s| s == 2 || s == 3));
        let f2 = assign_folds(&t, 10, 99).unwrap();
        assert_eq!(f.fold_of, f2.fold_of);
    }

    #[test]
    fn folds_singleton_case_and_bounds() {
        let t = toy_table(&(0..10).map(|i| i as f64).collect::<Vec<_>>());
        let f = assign_folds(&t, 10, 1).unwrap();
        assert!(f.fold_sizes().iter().all(|&s| s == 1));
        assert!(matches!(assign_folds(&t, 11, 1), Err(Error::Config(_))));
    }

    #[test]
    fn impute_fills_median() {
        let mut t = toy_table(&[1.0, 2.0, 3.0]);
        t.rows[0].covariates[0] = 1.0;
        t.rows[1].covariates[0] = MISSING;
        t.rows[2].covariates[0] = 3.0;
        let filled = impute_missing(&t).unwrap();
        assert_abs_diff_eq!(filled.rows[1].covariates[0], 2.0);
    }

    #[test]
    fn impute_identity_when_complete() {
        let t = toy_table(&[1.0, 2.0, 3.0]);
        let filled = impute_missing(&t).unwrap();
        for (a, b) in t.rows.iter().zip(filled.rows.iter()) {
            assert_eq!(a.covariates, b.covariates);
        }
    }

    #[test]
    fn impute_all_missing_column_errors() {
        let mut t = toy_table(&[1.0, 2.0, 3.0]);
        for row in &mut t.rows {
            row.covariates[0] = MISSING;
        }
        assert!(matches!(impute_missing(&t), Err(Error::Imputation(_))));
    }
}
