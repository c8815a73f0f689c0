//! Reproducible benchmark data and the two evaluation tasks.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorize::{NmfConfig, StrategyKind};
use crate::identify::{avg_abs_error, estimate_power, fit_offline, ErrorSummary, OfflineResult};
use crate::model::{Floorplan, PowerTrace, SystemModel, ThermalTrace, DEFAULT_AMBIENT_K, DEFAULT_DT_S};
use crate::simkit::{
    capture_steady_dataset, forward_sim, gen_cooling, gen_power, gen_steady_dataset, synth_model, SteadyCapture, SteadyData, SteadySuite,
    WorkloadKind, WorkloadSpec,
};

/// Data generated for one floorplan and seed.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadSuite {
    pub cooling_len: usize,
    /// Single-core experiments per unit; `None` picks `N + 3`.
    pub single_per_unit: Option<usize>,
    /// Mixed steady-state experiments; `None` picks `N`.
    pub mixed: Option<usize>,
    /// Readings recorded per steady-state experiment while it settles; zero
    /// records one exact settled row per experiment.
    pub readings_per_experiment: usize,
    pub runs: usize,
    pub run_len: usize,
}

impl Default for WorkloadSuite {
    fn default() -> Self {
        WorkloadSuite {
            cooling_len: 200,
            single_per_unit: None,
            mixed: None,
            readings_per_experiment: 0,
            runs: 4,
            run_len: 300,
        }
    }
}

impl WorkloadSuite {
    pub fn steady(&self, n: usize) -> SteadySuite {
        let d = SteadySuite::default_for(n);
        SteadySuite {
            single_per_unit: self.single_per_unit.unwrap_or(d.single_per_unit),
            mixed: self.mixed.unwrap_or(d.mixed),
        }
    }
}

/// One runtime workload: per-unit power and the resulting sensor trace.
#[derive(Debug, Clone)]
pub struct Run {
    pub power: PowerTrace,
    pub thermal: ThermalTrace,
}

#[derive(Debug, Clone)]
pub struct BenchmarkData {
    pub floorplan: Floorplan,
    pub seed: u64,
    pub model: SystemModel,
    pub cooling: ThermalTrace,
    pub steady: SteadyData,
    pub runs: Vec<Run>,
}

impl BenchmarkData {
    pub fn generate(fp: &Floorplan, seed: u64, suite: &WorkloadSuite) -> Result<Self> {
        let model = synth_model(fp, seed)?;
        Self::generate_with_model(fp, model, seed, suite)
    }

    /// Generates the measurement data for a given ground-truth model.
    pub fn generate_with_model(
        fp: &Floorplan,
        model: SystemModel,
        seed: u64,
        suite: &WorkloadSuite,
    ) -> Result<Self> {
        if model.n() != fp.n {
            return Err(Error::Shape(format!(
                "model has {} units but floorplan {} has {}",
                model.n(),
                fp.name,
                fp.n
            )));
        }
        let cooling = gen_cooling(&model, fp, suite.cooling_len, seed, DEFAULT_AMBIENT_K, DEFAULT_DT_S)?;
        let steady = if suite.readings_per_experiment == 0 {
            gen_steady_dataset(&model, fp, suite.steady(fp.n), seed)?
        } else {
            let capture = SteadyCapture {
                per_experiment: suite.readings_per_experiment,
                ..SteadyCapture::default()
            };
            capture_steady_dataset(&model, fp, suite.steady(fp.n), capture, seed)?
        };
        let mut runs = Vec::with_capacity(suite.runs);
        for r in 0..suite.runs {
            let spec = WorkloadSpec {
                kind: WorkloadKind::RandomWalk,
                duration: suite.run_len,
                budget: fp.power_budget,
                seed: seed.wrapping_mul(1_000).wrapping_add(r as u64),
            };
            let power = gen_power(fp, &spec)?;
            // Start from the steady state of the first power sample.
            let p0 = power.samples.as_ref().expect("generated power has samples").row(0).transpose();
            let t0 = (&model.r * p0).map(|t| t + DEFAULT_AMBIENT_K);
            let thermal = forward_sim(&model, &power, &t0, DEFAULT_AMBIENT_K, DEFAULT_DT_S)?;
            runs.push(Run { power, thermal });
        }
        Ok(BenchmarkData {
            floorplan: fp.clone(),
            seed,
            model,
            cooling,
            steady,
            runs,
        })
    }

    pub fn fit(&self, strategy: StrategyKind, cfg: &NmfConfig) -> Result<OfflineResult> {
        fit_offline(&self.cooling, &self.steady.dataset, strategy, cfg)
    }

    /// Power estimation error (percent) of `model` over every run, averaged
    /// run by run.
    pub fn power_error(&self, model: &SystemModel) -> Result<ErrorSummary> {
        let mut percent = 0.0;
        let mut excluded = 0;
        for run in &self.runs {
            let est = estimate_power(model, &run.thermal, &run.power.totals)?;
            let e = avg_abs_error(&est, &run.power)?;
            percent += e.percent;
            excluded += e.excluded;
        }
        if self.runs.is_empty() {
            return Err(Error::Degenerate("benchmark has no runtime workloads".into()));
        }
        Ok(ErrorSummary {
            percent: percent / self.runs.len() as f64,
            excluded,
        })
    }
}

/// Relative Frobenius distance `||x - y|| / ||y||`.
pub fn rel_frobenius(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    (x - y).norm() / y.norm()
}

/// Row sums of a sample-major power matrix.
pub fn totals_of(samples: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(samples.nrows(), samples.row_iter().map(|r| r.sum()))
}
