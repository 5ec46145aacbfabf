//! Regression evaluation metrics (MAE, RMSE, R2, Lin's CCC) and the
//! per-fold aggregation used for cross-validated comparisons.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub rmse: f64,
    pub r2: f64,
    pub ccc: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldedMetrics {
    pub per_fold: Vec<MetricsReport>,
    pub mean: MetricsReport,
    pub sd: MetricsReport,
}

fn check_pair(observed: &[f64], predicted: &[f64]) -> Result<()> {
    if observed.is_empty() || observed.len() != predicted.len() {
        return Err(Error::Shape(format!(
            "observed ({}) and predicted ({}) must have equal nonzero lengths",
            observed.len(),
            predicted.len()
        )));
    }
    if observed.iter().chain(predicted.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in metric input".into()));
    }
    Ok(())
}

pub fn mae(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    let n = observed.len() as f64;
    Ok(observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (p - o).abs())
        .sum::<f64>()
        / n)
}

pub fn rmse(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    let n = observed.len() as f64;
    Ok((observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (p - o).powi(2))
        .sum::<f64>()
        / n)
        .sqrt())
}

pub fn r2(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    if observed.len() < 2 {
        return Err(Error::InsufficientData("r2 needs n >= 2".into()));
    }
    let mean_o = stats::mean(observed);
    let ss_tot: f64 = observed.iter().map(|o| (o - mean_o).powi(2)).sum();
    if ss_tot <= 0.0 {
        return Err(Error::Degenerate("observed values have zero variance".into()));
    }
    let ss_res: f64 = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Lin's concordance correlation coefficient with population (1/n) variances.
///
/// Degenerate rule: both series constant and equal -> 1; any zero-variance
/// side otherwise -> 0.
pub fn ccc(observed: &[f64], predicted: &[f64]) -> Result<f64> {
    check_pair(observed, predicted)?;
    if observed.len() < 2 {
        return Err(Error::InsufficientData("ccc needs n >= 2".into()));
    }
    let n = observed.len() as f64;
    let mean_o = stats::mean(observed);
    let mean_p = stats::mean(predicted);
    let var_o = observed.iter().map(|o| (o - mean_o).powi(2)).sum::<f64>() / n;
    let var_p = predicted.iter().map(|p| (p - mean_p).powi(2)).sum::<f64>() / n;
    let cov = observed
        .iter()
        .zip(predicted)
        .map(|(o, p)| (o - mean_o) * (p - mean_p))
        .sum::<f64>()
        / n;
    let denom = var_o + var_p + (mean_o - mean_p).powi(2);
    if denom <= 0.0 {
        // Both series constant and identical.
        return Ok(1.0);
    }
    if var_o == 0.0 || var_p == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * cov / denom)
}

/// Bundles the four metrics over one (observed, predicted) pair.
pub fn evaluate(observed: &[f64], predicted: &[f64]) -> Result<MetricsReport> {
    Ok(MetricsReport {
        mae: mae(observed, predicted)?,
        rmse: rmse(observed, predicted)?,
        r2: r2(observed, predicted)?,
        ccc: ccc(observed, predicted)?,
        n: observed.len(),
    })
}

/// Per-metric mean and sample SD across folds.
pub fn aggregate_folds(reports: &[MetricsReport]) -> Result<FoldedMetrics> {
    if reports.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "fold aggregation needs k >= 2, got {}",
            reports.len()
        )));
    }
    let collect = |f: fn(&MetricsReport) -> f64| -> Vec<f64> { reports.iter().map(f).collect() };
    let maes = collect(|r| r.mae);
    let rmses = collect(|r| r.rmse);
    let r2s = collect(|r| r.r2);
    let cccs = collect(|r| r.ccc);
    let n_total = reports.iter().map(|r| r.n).sum();
    let agg = |v: &[f64]| (stats::mean(v), stats::sample_sd(v));
    let (mae_m, mae_s) = agg(&maes);
    let (rmse_m, rmse_s) = agg(&rmses);
    let (r2_m, r2_s) = agg(&r2s);
    let (ccc_m, ccc_s) = agg(&cccs);
    Ok(FoldedMetrics {
        per_fold: reports.to_vec(),
        mean: MetricsReport {
            mae: mae_m,
            rmse: rmse_m,
            r2: r2_m,
            ccc: ccc_m,
            n: n_total,
        },
        sd: MetricsReport {
            mae: mae_s,
            rmse: rmse_s,
            r2: r2_s,
            ccc: ccc_s,
            n: reports.len(),
        },
    })
}
