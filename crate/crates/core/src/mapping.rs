//! Per-pixel prediction maps with ensemble confidence intervals, interval
//! coverage accounting, and stratified group-mean comparisons over
//! categorical layers.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::crossval::CvRun;
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::raster::{ascii, RasterGrid, RasterStack};
use crate::samples::{SampleTable, TransformTag};
use crate::stats;

pub const DEFAULT_CI_LEVEL: f64 = 0.90;
/// Normal quantile used for the interval half-width.
pub const DEFAULT_Z: f64 = 1.64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapOptions {
    pub ci_level: f64,
    pub z: f64,
    /// Scale the fold models were trained on; predictions are mapped back
    /// to the original scale before the ensemble mean and SD.
    pub transform: TransformTag,
}

impl Default for MapOptions {
    fn default() -> Self {
        MapOptions {
            ci_level: DEFAULT_CI_LEVEL,
            z: DEFAULT_Z,
            transform: TransformTag::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub mean: RasterGrid,
    pub sd: RasterGrid,
    /// mean - z*sd, floored at zero (the target is a percentage).
    pub lower: RasterGrid,
    pub upper: RasterGrid,
    pub ci_level: f64,
    pub z: f64,
}

impl PredictionBundle {
    /// Writes mean.asc, sd.asc, lower.asc, upper.asc into the directory.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, grid) in [
            ("mean", &self.mean),
            ("sd", &self.sd),
            ("lower", &self.lower),
            ("upper", &self.upper),
        ] {
            ascii::write_ascii_grid(grid, &dir.join(format!("{name}.asc")))?;
        }
        Ok(())
    }
}

fn ensemble_stats(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (k - 1.0)).sqrt())
}

/// Applies every fold model of the run across the stack. Each pixel gets
/// the ensemble mean and sample SD of the k back-transformed predictions
/// and a mean +/- z*sd interval; a nodata value in any required layer
/// makes the pixel nodata in all four outputs.
pub fn predict_map(run: &CvRun, stack: &RasterStack, opts: &MapOptions) -> Result<PredictionBundle> {
    let k = run.fold_models.len();
    if k < 2 {
        return Err(Error::InsufficientData(format!(
            "interval maps need at least 2 fold models, run has {k}"
        )));
    }
    let names = &run.fold_models[0].feature_names;
    let layers: Vec<&RasterGrid> = names
        .iter()
        .map(|name| {
            stack.get(name).ok_or_else(|| {
                Error::Dependency(format!("prediction needs covariate layer '{name}'"))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let def = stack.def;
    // Row blocks predict independently; results are stitched in row order
    // so the worker count cannot affect the output.
    let rows: Vec<Vec<Option<(f64, f64)>>> = (0..def.nrows)
        .into_par_iter()
        .map(|row| {
            let mut valid_cols = Vec::new();
            let mut data = Vec::new();
            for col in 0..def.ncols {
                let i = row * def.ncols + col;
                let pixel: Option<Vec<f64>> = layers
                    .iter()
                    .map(|g| {
                        let v = g.values[i];
                        (!g.is_nodata(v)).then_some(v)
                    })
                    .collect();
                if let Some(values) = pixel {
                    valid_cols.push(col);
                    data.extend(values);
                }
            }
            let x = Matrix::from_vec(valid_cols.len(), names.len(), data)?;
            let mut preds = vec![vec![0.0; valid_cols.len()]; k];
            for (m, model) in run.fold_models.iter().enumerate() {
                for (j, p) in model.predict(&x)?.into_iter().enumerate() {
                    preds[m][j] = opts.transform.back_transform(p);
                }
            }
            let mut out = vec![None; def.ncols];
            let mut ensemble = vec![0.0; k];
            for (j, &col) in valid_cols.iter().enumerate() {
                for m in 0..k {
                    ensemble[m] = preds[m][j];
                }
                out[col] = Some(ensemble_stats(&ensemble));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut mean = RasterGrid::nodata_grid(def);
    let mut sd = RasterGrid::nodata_grid(def);
    let mut lower = RasterGrid::nodata_grid(def);
    let mut upper = RasterGrid::nodata_grid(def);
    for (row, cells) in rows.into_iter().enumerate() {
        for (col, cell) in cells.into_iter().enumerate() {
            if let Some((m, s)) = cell {
                mean.set(row, col, m);
                sd.set(row, col, s);
                lower.set(row, col, (m - opts.z * s).max(0.0));
                upper.set(row, col, m + opts.z * s);
            }
        }
    }
    Ok(PredictionBundle {
        mean,
        sd,
        lower,
        upper,
        ci_level: opts.ci_level,
        z: opts.z,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n_total: usize,
    pub n_inside: usize,
    pub n_below: usize,
    pub n_above: usize,
    pub pct_inside: f64,
    pub pct_below: f64,
    pub pct_above: f64,
}

impl CoverageReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }
}

/// Classifies each observation against the mean +/- z*sd interval of its
/// ensemble predictions (original scale). Each sample needs at least two
/// predictions.
pub fn coverage_from_predictions(
    observed: &[f64],
    predictions: &[Vec<f64>],
    z: f64,
) -> Result<CoverageReport> {
    if observed.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} observations but {} prediction sets",
            observed.len(),
            predictions.len()
        )));
    }
    let (mut inside, mut below, mut above) = (0usize, 0usize, 0usize);
    for (obs, preds) in observed.iter().zip(predictions) {
        if preds.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "interval needs at least 2 ensemble predictions, got {}",
                preds.len()
            )));
        }
        let (mean, sd) = ensemble_stats(preds);
        if *obs < mean - z * sd {
            below += 1;
        } else if *obs > mean + z * sd {
            above += 1;
        } else {
            inside += 1;
        }
    }
    let n = observed.len();
    let pct = |c: usize| 100.0 * c as f64 / n as f64;
    Ok(CoverageReport {
        n_total: n,
        n_inside: inside,
        n_below: below,
        n_above: above,
        pct_inside: pct(inside),
        pct_below: pct(below),
        pct_above: pct(above),
    })
}

/// Interval coverage of the table's observations. By default every fold
/// model predicts every sample, mirroring the map construction; set
/// `exclude_own_fold` to leave each sample's membership fold out.
pub fn coverage(
    run: &CvRun,
    table: &SampleTable,
    z: f64,
    exclude_own_fold: bool,
) -> Result<CoverageReport> {
    let k = run.fold_models.len();
    let needed = if exclude_own_fold { 3 } else { 2 };
    if k < needed {
        return Err(Error::InsufficientData(format!(
            "coverage needs at least {needed} fold models, run has {k}"
        )));
    }
    if run.folds.fold_of.len() != table.n() {
        return Err(Error::Shape(format!(
            "run folds cover {} rows, table has {}",
            run.folds.fold_of.len(),
            table.n()
        )));
    }
    let selected = run.mask.selected_indices();
    let x = table.covariate_matrix().select_cols(&selected);
    let per_model: Vec<Vec<f64>> = run
        .fold_models
        .iter()
        .map(|m| m.predict(&x))
        .collect::<Result<Vec<_>>>()?;

    let observed: Vec<f64> = table
        .targets()
        .iter()
        .map(|&v| table.transform.back_transform(v))
        .collect();
    let predictions: Vec<Vec<f64>> = (0..table.n())
        .map(|r| {
            (0..k)
                .filter(|&m| !(exclude_own_fold && run.folds.fold_of[r] == m))
                .map(|m| table.transform.back_transform(per_model[m][r]))
                .collect()
        })
        .collect();
    coverage_from_predictions(&observed, &predictions, z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub label: String,
    pub n: usize,
    pub mean: f64,
    /// Coefficient of variation, percent.
    pub cv: f64,
    pub letters: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSummary {
    /// Sorted by descending mean.
    pub classes: Vec<ClassSummary>,
    pub alpha: f64,
    /// Classes dropped for having fewer than two observations.
    pub warnings: Vec<String>,
}

impl StratifiedSummary {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["class", "n", "mean", "cv", "letters"])?;
        for c in &self.classes {
            w.write_record(&[
                c.label.clone(),
                c.n.to_string(),
                format!("{}", c.mean),
                format!("{}", c.cv),
                c.letters.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Maximal cliques of an undirected graph given as an adjacency matrix;
/// sizes here are tiny (one node per class), so plain recursion suffices.
fn maximal_cliques(adj: &[Vec<bool>]) -> Vec<Vec<usize>> {
    fn extend(
        adj: &[Vec<bool>],
        clique: &mut Vec<usize>,
        mut candidates: Vec<usize>,
        mut excluded: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if candidates.is_empty() && excluded.is_empty() {
            out.push(clique.clone());
            return;
        }
        while let Some(v) = candidates.first().copied() {
            let next_cand: Vec<usize> = candidates.iter().copied().filter(|&u| adj[v][u]).collect();
            let next_excl: Vec<usize> = excluded.iter().copied().filter(|&u| adj[v][u]).collect();
            clique.push(v);
            extend(adj, clique, next_cand, next_excl, out);
            clique.pop();
            candidates.retain(|&u| u != v);
            excluded.push(v);
        }
    }
    let n = adj.len();
    let mut out = Vec::new();
    extend(adj, &mut Vec::new(), (0..n).collect(), Vec::new(), &mut out);
    out
}

fn letter(i: usize) -> String {
    // A..Z, then AA, AB, ...
    let mut s = String::new();
    let mut i = i;
    loop {
        s.insert(0, (b'A' + (i % 26) as u8) as char);
        if i < 26 {
            break;
        }
        i = i / 26 - 1;
    }
    s
}

/// Per-class mean and CV with a compact letter display: all-pairs Welch
/// t-tests build a "not significantly different" graph whose maximal
/// cliques become letters, ordered by their best-ranked member. Classes
/// sharing a letter never differ at alpha; classes sharing none always do.
pub fn stratify(values: &[f64], labels: &[String], alpha: f64) -> Result<StratifiedSummary> {
    if values.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} values but {} class labels",
            values.len(),
            labels.len()
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config("alpha must lie in (0, 1)".into()));
    }
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (v, l) in values.iter().zip(labels) {
        groups.entry(l.as_str()).or_default().push(*v);
    }
    let mut warnings = Vec::new();
    let kept: Vec<(&str, Vec<f64>)> = groups
        .into_iter()
        .filter(|(label, vs)| {
            if vs.len() < 2 {
                warnings.push(format!(
                    "class '{label}' dropped: {} observation(s), need 2",
                    vs.len()
                ));
                false
            } else {
                true
            }
        })
        .collect();
    if kept.is_empty() {
        return Err(Error::InsufficientData(
            "no class has the two observations needed for comparison".into(),
        ));
    }

    // Rank classes by descending mean; the top class anchors letter A.
    let mut order: Vec<usize> = (0..kept.len()).collect();
    order.sort_by(|&a, &b| {
        stats::mean(&kept[b].1)
            .partial_cmp(&stats::mean(&kept[a].1))
            .unwrap()
            .then(a.cmp(&b))
    });
    let sorted: Vec<&(&str, Vec<f64>)> = order.iter().map(|&i| &kept[i]).collect();

    let n = sorted.len();
    let mut adj = vec![vec![false; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let (_, _, p) = stats::welch_t_test(&sorted[i].1, &sorted[j].1);
            adj[i][j] = p >= alpha;
            adj[j][i] = adj[i][j];
        }
    }
    let mut cliques = maximal_cliques(&adj);
    for c in cliques.iter_mut() {
        c.sort_unstable();
    }
    cliques.sort_by_key(|c| c[0]);
    let mut letters = vec![String::new(); n];
    for (li, clique) in cliques.iter().enumerate() {
        for &i in clique {
            letters[i].push_str(&letter(li));
        }
    }

    let classes = sorted
        .iter()
        .zip(letters)
        .map(|((label, vs), letters)| {
            let mean = stats::mean(vs);
            let sd = stats::sample_sd(vs);
            ClassSummary {
                label: label.to_string(),
                n: vs.len(),
                mean,
                cv: if mean != 0.0 { 100.0 * sd / mean } else { f64::NAN },
                letters,
            }
        })
        .collect();
    Ok(StratifiedSummary {
        classes,
        alpha,
        warnings,
    })
}

/// Stratifies a value grid by a categorical grid sharing its definition;
/// class labels are the categorical cell values formatted as text.
pub fn stratify_rasters(
    values: &RasterGrid,
    classes: &RasterGrid,
    alpha: f64,
) -> Result<StratifiedSummary> {
    if values.def != classes.def {
        return Err(Error::Alignment(
            "value and class grids have different definitions".into(),
        ));
    }
    let mut vs = Vec::new();
    let mut labels = Vec::new();
    for i in 0..values.def.len() {
        let v = values.values[i];
        let c = classes.values[i];
        if values.is_nodata(v) || classes.is_nodata(c) {
            continue;
        }
        vs.push(v);
        labels.push(if c == c.trunc() {
            format!("{}", c as i64)
        } else {
            format!("{c}")
        });
    }
    stratify(&vs, &labels, alpha)
}
