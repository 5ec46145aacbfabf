//! JSON run configuration. Precedence is command line > config file >
//! built-in default; validation happens up front, before any data loads.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use soilmap::gasel::GaConfig;
use soilmap::learners::{
    AnnParams, DnnParams, LearnerParams, LearnerSpec, ModelTreeParams, RfParams, SvrParams,
    XgbParams,
};
use soilmap::raster::{GridDef, ResampleMethod};
use soilmap::samples::ColumnSchema;
use soilmap::{Error, Result};

/// Environment variable supplying the default worker count.
pub const THREADS_ENV: &str = "SOILMAP_THREADS";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Point-sample CSV.
    pub samples: Option<PathBuf>,
    pub schema: ColumnSchema,
    /// JSON manifest of covariate layers for prediction.
    pub stack_manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Top-level seed; every stochastic stage derives its own child seed
    /// from this one value.
    pub seed: u64,
    pub folds: usize,
    /// Model the target as ln(target + log_offset).
    pub log_transform: bool,
    pub log_offset: f64,
    /// Interval half-width multiplier and its nominal level.
    pub z: f64,
    pub ci_level: f64,
    /// Significance level for stratified group comparisons.
    pub alpha: f64,
    pub ga: GaConfig,
    /// Learners evaluated by `evaluate`; `map` uses `learners[map_learner]`.
    pub learners: Vec<LearnerSpec>,
    pub map_learner: usize,
    /// JSON list of selected feature names (as written by `select`).
    pub mask: Option<PathBuf>,
    /// Stack layer with categorical classes for the stratified summary.
    pub class_layer: Option<String>,
    pub importance_repeats: usize,
    pub threads: Option<usize>,
    pub covariates: CovariateConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariateConfig {
    /// JSON manifest of input band grids.
    pub bands_manifest: Option<PathBuf>,
    /// DEM grid; falls back to a stack layer named "DEM".
    pub dem: Option<PathBuf>,
    /// Band-algebra index names to compute.
    pub indices: Vec<String>,
    /// Terrain attribute names to compute from the DEM.
    pub terrain: Vec<String>,
    /// Output grid; defaults to the input band grid definition.
    pub target_grid: Option<GridDef>,
    pub resample: ResampleMethod,
}

impl Default for CovariateConfig {
    fn default() -> Self {
        CovariateConfig {
            bands_manifest: None,
            dem: None,
            indices: Vec::new(),
            terrain: Vec::new(),
            target_grid: None,
            resample: ResampleMethod::Bilinear,
        }
    }
}

pub fn default_learners() -> Vec<LearnerSpec> {
    [
        LearnerParams::Svr(SvrParams::default()),
        LearnerParams::Ann(AnnParams::default()),
        LearnerParams::ModelTree(ModelTreeParams::default()),
        LearnerParams::Rf(RfParams::default()),
        LearnerParams::Xgb(XgbParams::default()),
        LearnerParams::Dnn(DnnParams::default()),
    ]
    .into_iter()
    .map(|params| LearnerSpec::new(params, 0))
    .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            samples: None,
            schema: ColumnSchema {
                id: "id".into(),
                x: "x".into(),
                y: "y".into(),
                target: "soc".into(),
                features: None,
            },
            stack_manifest: None,
            output_dir: PathBuf::from("run"),
            seed: 0,
            folds: 10,
            log_transform: false,
            log_offset: 1.0,
            z: 1.64,
            ci_level: 0.90,
            alpha: 0.05,
            ga: GaConfig::default(),
            learners: default_learners(),
            map_learner: 0,
            mask: None,
            class_layer: None,
            importance_repeats: 5,
            threads: None,
            covariates: CovariateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Cheap structural checks shared by every command.
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!(
                "folds must be at least 2, got {}",
                self.folds
            )));
        }
        if !(self.z > 0.0) {
            return Err(Error::Config("z must be positive".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::Config("ci_level must lie in (0, 1)".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.log_transform && !(self.log_offset > 0.0) {
            return Err(Error::Config("log_offset must be positive".into()));
        }
        if self.learners.is_empty() {
            return Err(Error::Config("at least one learner is required".into()));
        }
        if self.map_learner >= self.learners.len() {
            return Err(Error::Config(format!(
                "map_learner {} out of range for {} learners",
                self.map_learner,
                self.learners.len()
            )));
        }
        for spec in &self.learners {
            spec.validate()?;
        }
        self.ga.validate()?;
        if self.importance_repeats < 1 {
            return Err(Error::Config("importance_repeats must be at least 1".into()));
        }
        Ok(())
    }

    pub fn require_samples(&self) -> Result<&Path> {
        let path = self
            .samples
            .as_deref()
            .ok_or_else(|| Error::Config("no samples file configured".into()))?;
        require_exists(path, "samples file")?;
        Ok(path)
    }

    pub fn require_stack(&self) -> Result<&Path> {
        let path = self
            .stack_manifest
            .as_deref()
            .ok_or_else(|| Error::Config("no stack manifest configured".into()))?;
        require_exists(path, "stack manifest")?;
        Ok(path)
    }

    pub fn require_bands(&self) -> Result<&Path> {
        let path = self
            .covariates
            .bands_manifest
            .as_deref()
            .ok_or_else(|| Error::Config("no bands manifest configured".into()))?;
        require_exists(path, "bands manifest")?;
        Ok(path)
    }

    /// FNV-1a hash of the canonical JSON form, recorded in manifest.json
    /// so a run directory can be matched back to its configuration.
    pub fn hash(&self) -> Result<String> {
        let canonical = serde_json::to_string(self)?;
        let mut h: u64 = 0xcbf29ce484222325;
        for b in canonical.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        Ok(format!("{h:016x}"))
    }
}

pub fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{what} not found: {}", path.display()),
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn bad_fields_are_rejected() {
        let mut c = RunConfig::default();
        c.folds = 1;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.alpha = 1.5;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.map_learner = 99;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn invalid_learner_spec_fails_validation_with_range() {
        let mut c = RunConfig::default();
        if let LearnerParams::Svr(svr) = &mut c.learners[0].params {
            svr.c = 1000.0;
        }
        match c.validate() {
            Err(Error::Spec(msg)) => assert!(msg.contains("0.01-100")),
            other => panic!("expected spec error, got {other:?}"),
        }
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 1;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = RunConfig::default();
        let text = serde_json::to_string_pretty(&c).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.hash().unwrap(), c.hash().unwrap());
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>("{\"no_such_key\": 1}");
        assert!(err.is_err());
    }
}
