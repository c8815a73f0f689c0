use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{NmfConfig, StrategyKind};
use crate::harness::WorkloadSuite;
use crate::model::{Floorplan, BENCHMARK_FLOORPLANS};
use crate::sentinel::{default_dt_grid, default_xi_grid};

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "BPILAB_OUT";
pub const DEFAULT_OUT: &str = "bpilab-out";

/// Largest attack offset magnitude accepted in a grid, in kelvin.
pub const MAX_DT_ERROR: f64 = 50.0;

/// Everything one evaluation run depends on. The JSON form mirrors the field
/// names; missing fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub floorplan: String,
    /// First seed; ensembles use `seed, seed + 1, ...`.
    pub seed: u64,
    /// Ensemble size for the accuracy comparison.
    pub seeds: usize,
    pub suite: WorkloadSuite,
    pub nmf: NmfConfig,
    pub strategies: Vec<StrategyKind>,
    pub xi_grid: Vec<f64>,
    pub dt_grid: Vec<f64>,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            floorplan: "mesh2x2".into(),
            seed: 0,
            seeds: 10,
            suite: WorkloadSuite::default(),
            nmf: NmfConfig::default(),
            strategies: StrategyKind::ALL.to_vec(),
            xi_grid: default_xi_grid(),
            dt_grid: default_dt_grid(),
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| {
            Error::parse(
                format!("{}:{}:{}", path.display(), e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn floorplan(&self) -> Result<Floorplan> {
        Floorplan::by_name(&self.floorplan)
    }

    pub fn validate(&self) -> Result<()> {
        if !BENCHMARK_FLOORPLANS.contains(&self.floorplan.as_str()) {
            return Err(Error::Usage(format!(
                "floorplan '{}' is not one of {}",
                self.floorplan,
                BENCHMARK_FLOORPLANS.join(", ")
            )));
        }
        if self.seeds == 0 {
            return Err(Error::Usage("seeds must be at least 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::Usage("strategy list is empty".into()));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.strategies.iter().find(|s| !seen.insert(**s)) {
            return Err(Error::Usage(format!("strategy {dup} is listed twice")));
        }
        if self.xi_grid.is_empty() {
            return Err(Error::Usage("xi grid is empty".into()));
        }
        if let Some(xi) = self.xi_grid.iter().find(|&&x| !(x > 0.0 && x <= 1.0)) {
            return Err(Error::Usage(format!("xi {xi} is outside (0, 1]")));
        }
        if self.dt_grid.is_empty() {
            return Err(Error::Usage("dt grid is empty".into()));
        }
        if let Some(dt) = self.dt_grid.iter().find(|&&d| !(d.abs() <= MAX_DT_ERROR)) {
            return Err(Error::Usage(format!(
                "dt {dt} is outside [-{MAX_DT_ERROR}, {MAX_DT_ERROR}]"
            )));
        }
        let s = &self.suite;
        if s.cooling_len < 2 || s.run_len < 2 || s.runs == 0 {
            return Err(Error::Usage(
                "suite needs cooling_len >= 2, run_len >= 2 and at least one run".into(),
            ));
        }
        self.nmf.validate().map_err(|e| Error::Usage(e.to_string()))
    }

    /// `out` if set, else `$BPILAB_OUT`, else `bpilab-out`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}
