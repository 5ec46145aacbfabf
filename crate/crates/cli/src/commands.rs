//! Pipeline commands. Each one validates its inputs, runs the relevant
//! stages, and writes artifacts under the configured output directory.

use std::path::Path;

use serde::Serialize;
use soilmap::crossval;
use soilmap::gasel::{self, FeatureMask, GaConfig};
use soilmap::learners::{Algorithm, LearnerParams, LearnerSpec, RfParams};
use soilmap::mapping::{self, MapOptions};
use soilmap::raster::{self, ascii, terrain::TerrainAttribute, RasterGrid, RasterStack};
use soilmap::samples::{
    self, DescriptiveStats, SampleTable, TransformDirection,
};
use soilmap::{seed, Error, Result};

use crate::config::RunConfig;

fn load_table(config: &RunConfig) -> Result<SampleTable> {
    let path = config.require_samples()?;
    let table = samples::load_samples(path, &config.schema)?;
    let table = samples::impute_missing(&table)?;
    if config.log_transform {
        samples::transform_target(&table, TransformDirection::Forward, config.log_offset)
    } else {
        Ok(table)
    }
}

/// Reads a mask file (JSON list of feature names) against the table, or
/// selects every feature when none is configured.
fn load_mask(config: &RunConfig, table: &SampleTable) -> Result<FeatureMask> {
    let Some(path) = config.mask.as_deref() else {
        return Ok(FeatureMask::all(table.p()));
    };
    crate::config::require_exists(path, "mask file")?;
    let text = std::fs::read_to_string(path)?;
    let names: Vec<String> = serde_json::from_str(&text)?;
    let indices: Vec<usize> = names
        .iter()
        .map(|name| {
            table.feature_index(name).ok_or_else(|| {
                Error::Config(format!("mask names unknown feature '{name}'"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMask::from_indices(table.p(), &indices))
}

fn learner_specs(config: &RunConfig) -> Vec<LearnerSpec> {
    config
        .learners
        .iter()
        .enumerate()
        .map(|(i, spec)| LearnerSpec {
            params: spec.params.clone(),
            seed: seed::derive(config.seed, "learner", i as u64),
        })
        .collect()
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

/// Descriptive statistics of the target, before and (when the log
/// transform is on) after transformation.
pub fn cmd_stats(config: &RunConfig) -> Result<()> {
    let path = config.require_samples()?;
    let raw = samples::load_samples(path, &config.schema)?;
    let raw = samples::impute_missing(&raw)?;
    let before = samples::describe(&raw)?;
    let after = if config.log_transform {
        let transformed =
            samples::transform_target(&raw, TransformDirection::Forward, config.log_offset)?;
        Some(samples::describe(&transformed)?)
    } else {
        None
    };
    #[derive(Serialize)]
    struct StatsFile {
        target: String,
        n: usize,
        before_transform: DescriptiveStats,
        after_transform: Option<DescriptiveStats>,
    }
    write_json(
        &StatsFile {
            target: raw.target_name.clone(),
            n: raw.n(),
            before_transform: before,
            after_transform: after,
        },
        &config.output_dir.join("stats.json"),
    )
}

/// Computes the requested band indices and terrain attributes, resamples
/// them onto the target grid, and writes them with a stack manifest.
pub fn cmd_covariates(config: &RunConfig) -> Result<()> {
    let cov = &config.covariates;
    // Parse names first so typos fail before any raster math runs.
    let index_defs = cov
        .indices
        .iter()
        .map(|n| raster::indices::lookup(n))
        .collect::<Result<Vec<_>>>()?;
    let terrain_attrs = cov
        .terrain
        .iter()
        .map(|n| TerrainAttribute::parse(n))
        .collect::<Result<Vec<_>>>()?;

    let bands = RasterStack::load_manifest(config.require_bands()?)?;
    let dem: Option<RasterGrid> = match &cov.dem {
        Some(path) => {
            crate::config::require_exists(path, "DEM grid")?;
            Some(ascii::read_ascii_grid(path)?)
        }
        None => bands.get("DEM").cloned(),
    };
    if !terrain_attrs.is_empty() && dem.is_none() {
        return Err(Error::Dependency(
            "terrain attributes need a DEM grid (covariates.dem or a 'DEM' layer)".into(),
        ));
    }

    let target = cov.target_grid.unwrap_or(bands.def);
    let mut layers: Vec<(String, RasterGrid)> = Vec::new();
    for def in index_defs {
        layers.push((def.name.to_string(), raster::indices::band_index(&bands, def.name)?));
    }
    for (name, attr) in cov.terrain.iter().zip(terrain_attrs) {
        let grid = raster::terrain::terrain(dem.as_ref().unwrap(), attr)?;
        layers.push((name.to_ascii_lowercase(), grid));
    }
    if layers.is_empty() {
        return Err(Error::Config(
            "no covariates requested: list indices and/or terrain attributes".into(),
        ));
    }

    let dir = config.output_dir.join("covariates");
    std::fs::create_dir_all(&dir)?;
    let mut manifest = serde_json::Map::new();
    for (name, grid) in layers {
        let resampled = if grid.def == target {
            grid
        } else {
            raster::resample(&grid, target, cov.resample)?
        };
        let file = format!("{name}.asc");
        ascii::write_ascii_grid(&resampled, &dir.join(&file))?;
        manifest.insert(name, serde_json::Value::String(file));
    }
    write_json(&manifest, &dir.join("manifest.json"))
}

#[derive(Serialize)]
struct SelectionFile {
    selected: Vec<String>,
    selected_count: usize,
    candidate_count: usize,
    generations_run: usize,
    notice: Option<String>,
}

/// Genetic-algorithm feature selection; writes the mask, the convergence
/// trace, and a summary. A single candidate feature short-circuits the GA.
pub fn cmd_select(config: &RunConfig) -> Result<()> {
    let table = load_table(config)?;
    std::fs::create_dir_all(&config.output_dir)?;
    let mask_path = config.output_dir.join("mask.json");

    if table.p() == 1 {
        let mask = FeatureMask::all(1);
        mask.save_names(&table.feature_names, &mask_path)?;
        return write_json(
            &SelectionFile {
                selected: table.feature_names.clone(),
                selected_count: 1,
                candidate_count: 1,
                generations_run: 0,
                notice: Some("only one candidate feature; selection skipped".into()),
            },
            &config.output_dir.join("selection.json"),
        );
    }

    let ga = GaConfig {
        seed: seed::derive(config.seed, "ga", 0),
        ..config.ga
    };
    let (mask, trace) = gasel::evolve(&table, &table.feature_names, &ga)?;
    mask.save_names(&table.feature_names, &mask_path)?;
    trace.save_csv(&config.output_dir.join("ga_trace.csv"))?;
    write_json(
        &SelectionFile {
            selected: mask.selected_names(&table.feature_names),
            selected_count: mask.selected_count(),
            candidate_count: table.p(),
            generations_run: trace.records.len(),
            notice: None,
        },
        &config.output_dir.join("selection.json"),
    )
}

/// Cross-validates every configured learner on the masked features and
/// writes the comparison table.
pub fn cmd_evaluate(config: &RunConfig) -> Result<()> {
    let table = load_table(config)?;
    let mask = load_mask(config, &table)?;
    let folds = samples::assign_folds(&table, config.folds, seed::derive(config.seed, "folds", 0))?;
    let comparison = crossval::compare(&table, &mask, &learner_specs(config), &folds)?;
    std::fs::create_dir_all(&config.output_dir)?;
    write_json(&comparison, &config.output_dir.join("evaluation.json"))
}

/// Fits the mapping learner across folds, predicts the covariate stack
/// with confidence intervals, and writes coverage, importance, and the
/// stratified class summary.
pub fn cmd_map(config: &RunConfig) -> Result<()> {
    let table = load_table(config)?;
    let mask = load_mask(config, &table)?;
    let stack = RasterStack::load_manifest(config.require_stack()?)?;

    // Fail before any model fit if the stack cannot serve the mask.
    for name in mask.selected_names(&table.feature_names) {
        if stack.get(&name).is_none() {
            return Err(Error::Dependency(format!(
                "stack manifest has no layer for selected feature '{name}'"
            )));
        }
    }
    if let Some(layer) = &config.class_layer {
        if stack.get(layer).is_none() {
            return Err(Error::Dependency(format!(
                "stack manifest has no class layer '{layer}'"
            )));
        }
    }

    let spec = learner_specs(config)
        .into_iter()
        .nth(config.map_learner)
        .expect("validated map_learner index");
    let folds = samples::assign_folds(&table, config.folds, seed::derive(config.seed, "folds", 0))?;
    let run = crossval::cross_validate(&table, &mask, &spec, &folds)?;

    let opts = MapOptions {
        ci_level: config.ci_level,
        z: config.z,
        transform: table.transform,
    };
    let bundle = mapping::predict_map(&run, &stack, &opts)?;
    let map_dir = config.output_dir.join("map");
    bundle.save_dir(&map_dir)?;

    let report = mapping::coverage(&run, &table, config.z, false)?;
    report.save_json(&config.output_dir.join("coverage.json"))?;

    let rf_spec = config
        .learners
        .iter()
        .find(|s| s.algorithm() == Algorithm::Rf)
        .map(|s| s.params.clone())
        .unwrap_or(LearnerParams::Rf(RfParams::default()));
    let importance = gasel::importance(
        &table,
        &mask,
        &LearnerSpec::new(rf_spec, seed::derive(config.seed, "importance", 0)),
        config.importance_repeats,
        seed::derive(config.seed, "importance", 1),
    )?;
    write_json(&importance, &config.output_dir.join("importance.json"))?;

    if let Some(layer) = &config.class_layer {
        let classes = stack.get(layer).expect("checked above");
        let summary = mapping::stratify_rasters(&bundle.mean, classes, config.alpha)?;
        summary.save_csv(&config.output_dir.join("stratified_summary.csv"))?;
    }
    Ok(())
}
