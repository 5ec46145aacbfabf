//! Genetic-algorithm wrapper feature selection: binary chromosomes over
//! covariates scored by random-forest cross-validated RMSE, with external
//! validation curves and permutation importance.

use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::learners::forest::fit_random_forest;
use crate::learners::{LearnerParams, LearnerSpec, RfParams};
use crate::samples::{assign_folds, FoldAssignment, SampleTable};
use crate::seed;

/// Binary chromosome over the feature columns. All-zero masks are invalid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureMask {
    pub bits: Vec<bool>,
}

impl FeatureMask {
    pub fn all(p: usize) -> FeatureMask {
        FeatureMask { bits: vec![true; p] }
    }

    pub fn from_indices(p: usize, indices: &[usize]) -> FeatureMask {
        let mut bits = vec![false; p];
        for &i in indices {
            bits[i] = true;
        }
        FeatureMask { bits }
    }

    pub fn selected_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn selected_indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    pub fn check(&self, p: usize) -> Result<()> {
        if self.bits.len() != p {
            return Err(Error::Shape(format!(
                "mask length {} does not match {p} features",
                self.bits.len()
            )));
        }
        if self.selected_count() == 0 {
            return Err(Error::Config("feature mask selects nothing".into()));
        }
        Ok(())
    }

    pub fn selected_names(&self, feature_names: &[String]) -> Vec<String> {
        self.selected_indices()
            .iter()
            .map(|&i| feature_names[i].clone())
            .collect()
    }

    /// Writes the selected feature names as a JSON list.
    pub fn save_names(&self, feature_names: &[String], path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(
            std::io::BufWriter::new(file),
            &self.selected_names(feature_names),
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub crossover_rate: f64,
    /// Per-gene bit-flip probability.
    pub mutation_rate: f64,
    pub generations: usize,
    pub fitness_folds: usize,
    /// Trees in the fitness forest (Mtry = ceil(sqrt(selected)) per mask).
    pub fitness_ntree: usize,
    pub elitism: usize,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population: 50,
            crossover_rate: 0.6,
            mutation_rate: 0.001,
            generations: 100,
            fitness_folds: 10,
            fitness_ntree: 200,
            elitism: 2,
            seed: 0,
        }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.population % 2 != 0 {
            return Err(Error::Config("GA population must be even and >= 2".into()));
        }
        for (name, rate) in [
            ("crossover_rate", self.crossover_rate),
            ("mutation_rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config(format!("GA {name} must lie in [0,1]")));
            }
        }
        if self.generations < 1 {
            return Err(Error::Config("GA needs at least one generation".into()));
        }
        if self.fitness_folds < 2 {
            return Err(Error::Config("GA fitness needs at least 2 folds".into()));
        }
        if self.elitism > self.population {
            return Err(Error::Config("GA elitism exceeds population".into()));
        }
        if self.fitness_ntree < 1 {
            return Err(Error::Config("GA fitness forest needs trees".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_internal_rmse: f64,
    pub mean_internal_rmse: f64,
    pub external_rmse: Option<f64>,
    pub best_mask: FeatureMask,
    pub selected_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaTrace {
    pub records: Vec<GenerationRecord>,
    /// Sample ids of every row the fitness evaluation saw, for leakage checks.
    pub train_ids: Vec<String>,
    pub fitness_seed: u64,
    pub fitness_ntree: usize,
}

impl GaTrace {
    /// CSV export: one row per generation, for plotting convergence curves.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "generation",
            "best_internal_rmse",
            "mean_internal_rmse",
            "external_rmse",
            "selected_count",
        ])?;
        for r in &self.records {
            w.write_record(&[
                r.generation.to_string(),
                format!("{}", r.best_internal_rmse),
                format!("{}", r.mean_internal_rmse),
                r.external_rmse.map_or(String::new(), |v| format!("{v}")),
                r.selected_count.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mean validation RMSE (original target scale) of a random forest over the
/// masked columns. The per-fold seeds mirror `crossval::cross_validate`, so
/// an all-ones mask scores identically to a plain CV run of the same spec.
/// Hyperparameter ranges are deliberately not enforced here so small
/// fitness forests stay cheap.
pub fn fitness(
    mask: &FeatureMask,
    table: &SampleTable,
    folds: &FoldAssignment,
    rf_spec: &LearnerSpec,
) -> Result<f64> {
    let rf = match &rf_spec.params {
        LearnerParams::Rf(rf) => rf,
        _ => {
            return Err(Error::Config(format!(
                "GA fitness requires an RF spec, got {}",
                rf_spec.algorithm().name()
            )))
        }
    };
    mask.check(table.p())?;
    let selected = mask.selected_indices();
    let x = table.covariate_matrix().select_cols(&selected);
    let y = table.targets();

    let mut total = 0.0;
    for fold in 0..folds.k {
        let train = folds.training_indices(fold);
        let val = folds.validation_indices(fold);
        let xt = x.select_rows(&train);
        let yt: Vec<f64> = train.iter().map(|&r| y[r]).collect();
        let params = RfParams {
            mtry: rf.mtry.min(selected.len()),
            ..*rf
        };
        let model = fit_random_forest(&xt, &yt, &params, seed::derive(rf_spec.seed, "cv-fold", fold as u64))?;
        let mut sq = 0.0;
        for &r in &val {
            let pred = table.transform.back_transform(model.predict_row(x.row(r)));
            let obs = table.transform.back_transform(y[r]);
            sq += (pred - obs).powi(2);
        }
        total += (sq / val.len() as f64).sqrt();
    }
    Ok(total / folds.k as f64)
}

/// Memoizing fitness evaluator; counts actual model fits so callers can
/// assert the cache short-circuits repeated chromosomes.
pub struct FitnessEvaluator<'a> {
    table: &'a SampleTable,
    folds: FoldAssignment,
    ntree: usize,
    fitness_seed: u64,
    cache: Mutex<HashMap<Vec<bool>, f64>>,
    fits: AtomicUsize,
}

impl<'a> FitnessEvaluator<'a> {
    pub fn new(table: &'a SampleTable, folds: FoldAssignment, ntree: usize, fitness_seed: u64) -> Self {
        FitnessEvaluator {
            table,
            folds,
            ntree,
            fitness_seed,
            cache: Mutex::new(HashMap::new()),
            fits: AtomicUsize::new(0),
        }
    }

    pub fn fit_count(&self) -> usize {
        self.fits.load(Ordering::SeqCst)
    }

    fn rf_spec(&self, selected: usize) -> LearnerSpec {
        let mtry = (selected as f64).sqrt().ceil() as usize;
        LearnerSpec::new(
            LearnerParams::Rf(RfParams {
                mtry: mtry.max(1),
                ntree: self.ntree,
                min_leaf: 5,
                bootstrap: true,
            }),
            self.fitness_seed,
        )
    }

    pub fn evaluate(&self, mask: &FeatureMask) -> Result<f64> {
        if let Some(&v) = self.cache.lock().unwrap().get(&mask.bits) {
            return Ok(v);
        }
        self.fits.fetch_add(1, Ordering::SeqCst);
        let v = fitness(mask, self.table, &self.folds, &self.rf_spec(mask.selected_count()))?;
        self.cache.lock().unwrap().insert(mask.bits.clone(), v);
        Ok(v)
    }
}

fn repair(bits: &mut [bool], positions: &[usize], rng: &mut rand_chacha::ChaCha8Rng) {
    if !positions.iter().any(|&i| bits[i]) {
        bits[positions[rng.gen_range(0..positions.len())]] = true;
    }
}

/// Runs the GA over the named candidate features and returns the best mask
/// (over the full feature set; non-candidate genes stay off) with the full
/// convergence trace.
pub fn evolve(
    table: &SampleTable,
    candidates: &[String],
    config: &GaConfig,
) -> Result<(FeatureMask, GaTrace)> {
    config.validate()?;
    let p = table.p();
    let positions: Vec<usize> = candidates
        .iter()
        .map(|name| {
            table
                .feature_index(name)
                .ok_or_else(|| Error::Schema(format!("unknown candidate feature '{name}'")))
        })
        .collect::<Result<Vec<usize>>>()?;
    if positions.len() < 2 {
        return Err(Error::Config("GA needs at least 2 candidate features".into()));
    }

    let folds = assign_folds(table, config.fitness_folds, seed::derive(config.seed, "ga-folds", 0))?;
    let fitness_seed = seed::derive(config.seed, "ga-fitness", 0);
    let evaluator = FitnessEvaluator::new(table, folds, config.fitness_ntree, fitness_seed);

    let mut rng = seed::rng(seed::derive(config.seed, "ga-evolve", 0));
    let mut population: Vec<FeatureMask> = (0..config.population)
        .map(|_| {
            let mut bits = vec![false; p];
            for &i in &positions {
                bits[i] = rng.gen::<bool>();
            }
            repair(&mut bits, &positions, &mut rng);
            FeatureMask { bits }
        })
        .collect();

    let mut records = Vec::with_capacity(config.generations);
    let mut overall_best: Option<(f64, FeatureMask)> = None;

    for generation in 0..config.generations {
        // Fitness is a pure function of the chromosome, so parallel
        // evaluation order cannot change results.
        let scores: Vec<f64> = population
            .par_iter()
            .map(|mask| evaluator.evaluate(mask))
            .collect::<Result<Vec<f64>>>()?;

        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap_or(std::cmp::Ordering::Equal));
        let best_idx = order[0];
        let best_rmse = scores[best_idx];
        let mean_rmse = scores.iter().sum::<f64>() / scores.len() as f64;
        if overall_best.as_ref().map_or(true, |(b, _)| best_rmse < *b) {
            overall_best = Some((best_rmse, population[best_idx].clone()));
        }
        records.push(GenerationRecord {
            generation,
            best_internal_rmse: best_rmse,
            mean_internal_rmse: mean_rmse,
            external_rmse: None,
            best_mask: population[best_idx].clone(),
            selected_count: population[best_idx].selected_count(),
        });

        if generation + 1 == config.generations {
            break;
        }

        // Next generation: elites survive unchanged, the rest come from
        // binary-tournament parents with single-point crossover and
        // per-gene mutation.
        let mut next: Vec<FeatureMask> = order[..config.elitism.min(order.len())]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        let tournament = |rng: &mut rand_chacha::ChaCha8Rng| -> usize {
            let a = rng.gen_range(0..population.len());
            let b = rng.gen_range(0..population.len());
            if scores[a] <= scores[b] {
                a
            } else {
                b
            }
        };
        while next.len() < config.population {
            let pa = &population[tournament(&mut rng)];
            let pb = &population[tournament(&mut rng)];
            let (mut ca, mut cb) = (pa.bits.clone(), pb.bits.clone());
            if rng.gen::<f64>() < config.crossover_rate && positions.len() > 1 {
                let cut = rng.gen_range(1..positions.len());
                for &i in &positions[cut..] {
                    ca[i] = pb.bits[i];
                    cb[i] = pa.bits[i];
                }
            }
            for child in [&mut ca, &mut cb] {
                for &i in &positions {
                    if rng.gen::<f64>() < config.mutation_rate {
                        child[i] = !child[i];
                    }
                }
                repair(child, &positions, &mut rng);
            }
            next.push(FeatureMask { bits: ca });
            if next.len() < config.population {
                next.push(FeatureMask { bits: cb });
            }
        }
        population = next;
    }

    let (_, best_mask) = overall_best.expect("at least one generation ran");
    let trace = GaTrace {
        records,
        train_ids: table.rows.iter().map(|r| r.id.clone()).collect(),
        fitness_seed,
        fitness_ntree: config.fitness_ntree,
    };
    Ok((best_mask, trace))
}

/// Scores each generation's best mask on an outer holdout: fold 0 of
/// `holdout` is the external set, the rest is the refit set. Every external
/// row must be unseen by the GA's fitness evaluation.
pub fn external_validate(
    trace: &GaTrace,
    table: &SampleTable,
    holdout: &FoldAssignment,
) -> Result<GaTrace> {
    if holdout.fold_of.len() != table.n() {
        return Err(Error::Shape(format!(
            "holdout assignment covers {} rows, table has {}",
            holdout.fold_of.len(),
            table.n()
        )));
    }
    let external = holdout.validation_indices(0);
    let refit = holdout.training_indices(0);
    let seen: std::collections::HashSet<&str> =
        trace.train_ids.iter().map(|s| s.as_str()).collect();
    for &r in &external {
        if seen.contains(table.rows[r].id.as_str()) {
            return Err(Error::Leakage(format!(
                "holdout row '{}' was visible to the GA fitness evaluation",
                table.rows[r].id
            )));
        }
    }

    let x = table.covariate_matrix();
    let y = table.targets();
    let mut out = trace.clone();
    for record in &mut out.records {
        let selected = record.best_mask.selected_indices();
        let xs = x.select_cols(&selected);
        let xt = xs.select_rows(&refit);
        let yt: Vec<f64> = refit.iter().map(|&r| y[r]).collect();
        let mtry = ((selected.len() as f64).sqrt().ceil() as usize).max(1);
        let params = RfParams {
            mtry,
            ntree: trace.fitness_ntree,
            min_leaf: 5,
            bootstrap: true,
        };
        let model = fit_random_forest(&xt, &yt, &params, seed::derive(trace.fitness_seed, "ga-external", record.generation as u64))?;
        let mut sq = 0.0;
        for &r in &external {
            let pred = table.transform.back_transform(model.predict_row(xs.row(r)));
            let obs = table.transform.back_transform(y[r]);
            sq += (pred - obs).powi(2);
        }
        record.external_rmse = Some((sq / external.len() as f64).sqrt());
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// Selected feature names, aligned with `percentages`.
    pub names: Vec<String>,
    /// Non-negative shares summing to 100.
    pub percentages: Vec<f64>,
}

/// Permutation importance of the masked features: mean RMSE increase over
/// `repeats` column shuffles, clipped at zero and normalized to percent.
pub fn importance(
    table: &SampleTable,
    mask: &FeatureMask,
    rf_spec: &LearnerSpec,
    repeats: usize,
    seed_value: u64,
) -> Result<ImportanceReport> {
    if repeats < 1 {
        return Err(Error::Config("importance needs at least one repeat".into()));
    }
    mask.check(table.p())?;
    let rf = match &rf_spec.params {
        LearnerParams::Rf(rf) => rf,
        _ => return Err(Error::Config("importance requires an RF spec".into())),
    };
    let selected = mask.selected_indices();
    let x = table.covariate_matrix().select_cols(&selected);
    let y = table.targets();
    let n = x.nrows();
    let params = RfParams {
        mtry: rf.mtry.min(selected.len()),
        ..*rf
    };
    let model = fit_random_forest(&x, &y, &params, rf_spec.seed)?;
    let rmse_of = |m: &Matrix| -> f64 {
        let sq: f64 = (0..n)
            .map(|r| (model.predict_row(m.row(r)) - y[r]).powi(2))
            .sum();
        (sq / n as f64).sqrt()
    };
    let baseline = rmse_of(&x);

    let mut increases = Vec::with_capacity(selected.len());
    for (j, _) in selected.iter().enumerate() {
        let mut total = 0.0;
        for rep in 0..repeats {
            let mut rng = seed::rng(seed::derive(seed_value, "perm", (j * repeats + rep) as u64));
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut shuffled = x.clone();
            for r in 0..n {
                shuffled.set(r, j, x.get(order[r], j));
            }
            total += rmse_of(&shuffled) - baseline;
        }
        increases.push((total / repeats as f64).max(0.0));
    }

    let sum: f64 = increases.iter().sum();
    let percentages: Vec<f64> = if sum > 0.0 {
        increases.iter().map(|v| v / sum * 100.0).collect()
    } else {
        vec![100.0 / selected.len() as f64; selected.len()]
    };
    Ok(ImportanceReport {
        names: mask.selected_names(&table.feature_names),
        percentages,
    })
}

impl ImportanceReport {
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["feature", "importance_pct"])?;
        for (name, pct) in self.names.iter().zip(&self.percentages) {
            w.write_record(&[name.clone(), format!("{pct}")])?;
        }
        w.flush()?;
        Ok(())
    }
}
