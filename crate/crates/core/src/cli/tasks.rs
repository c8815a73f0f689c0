use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::factorize::StrategyKind;
use crate::harness::BenchmarkData;
use crate::identify::{estimate_power, PowerEstimate};
use crate::model::{save_model, write_text};
use crate::sentinel::{build_golden, sweep, SensorData, SweepReport};

use super::config::ExperimentConfig;
use super::report::{self, FAILED};

/// Power estimation error per seed and strategy for one floorplan.
#[derive(Debug, Clone, PartialEq)]
pub struct Task1Table {
    pub floorplan: String,
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    /// `errors[s][j]` is the error (percent) of strategy `j` at seed `seeds[s]`,
    /// `None` when that fit failed.
    pub errors: Vec<Vec<Option<f64>>>,
    pub failures: Vec<String>,
}

impl Task1Table {
    /// Mean over seeds, `None` if any seed failed.
    pub fn mean(&self, strategy: usize) -> Option<f64> {
        let vals: Option<Vec<f64>> = self.errors.iter().map(|row| row[strategy]).collect();
        let vals = vals?;
        if vals.is_empty() {
            return None;
        }
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn mean_of(&self, kind: StrategyKind) -> Option<f64> {
        let j = self.strategies.iter().position(|&k| k == kind)?;
        self.mean(j)
    }
}

/// Accuracy comparison on `cfg.floorplan` over `cfg.seeds` seeds. Writes the
/// one-row comparison table, the per-seed table and per-core overlays of the
/// first seed's first run; the tables are rewritten after every seed so a
/// failure part way leaves the finished seeds on disk.
pub fn run_task1(cfg: &ExperimentConfig, out: &Path) -> Result<Task1Table> {
    cfg.validate()?;
    let fp = cfg.floorplan()?;
    let mut table = Task1Table {
        floorplan: fp.name.clone(),
        strategies: cfg.strategies.clone(),
        seeds: Vec::new(),
        errors: Vec::new(),
        failures: Vec::new(),
    };
    for seed in cfg.seed..cfg.seed + cfg.seeds as u64 {
        let data = BenchmarkData::generate(&fp, seed, &cfg.suite)?;
        let mut row = Vec::with_capacity(cfg.strategies.len());
        let mut overlays: Vec<Option<PowerEstimate>> = Vec::new();
        for &kind in &cfg.strategies {
            let outcome = data.fit(kind, &cfg.nmf).and_then(|fit| {
                let err = data.power_error(&fit.model)?;
                let first = estimate_power(&fit.model, &data.runs[0].thermal, &data.runs[0].power.totals)?;
                Ok((err.percent, first))
            });
            match outcome {
                Ok((e, est)) => {
                    row.push(Some(e));
                    overlays.push(Some(est));
                }
                Err(e) => {
                    table.failures.push(format!("seed {seed} {}: {e}", kind.label()));
                    row.push(None);
                    overlays.push(None);
                }
            }
        }
        table.seeds.push(seed);
        table.errors.push(row);
        if seed == cfg.seed {
            write_overlays(out, &fp.name, &data, &cfg.strategies, &overlays)?;
        }
        write_task1_files(out, &table)?;
    }
    Ok(table)
}

fn write_task1_files(out: &Path, t: &Task1Table) -> Result<()> {
    write_text(
        &out.join(format!("table2_{}.csv", t.floorplan)),
        &table2_csv(std::slice::from_ref(t)),
    )?;
    let mut text = header_line("seed", &t.strategies);
    for (seed, row) in t.seeds.iter().zip(&t.errors) {
        text.push_str(&seed.to_string());
        for v in row {
            text.push(',');
            text.push_str(&cell(*v));
        }
        text.push('\n');
    }
    write_text(&out.join(format!("task1_{}_seeds.csv", t.floorplan)), &text)
}

/// Mean errors with one row per floorplan and one column per strategy. All
/// tables must list the same strategies.
pub fn table2_csv(tables: &[Task1Table]) -> String {
    let strategies = tables.first().map(|t| t.strategies.clone()).unwrap_or_default();
    let mut text = header_line("benchmark", &strategies);
    for t in tables {
        text.push_str(&t.floorplan);
        for j in 0..t.strategies.len() {
            text.push(',');
            text.push_str(&cell(t.mean(j)));
        }
        text.push('\n');
    }
    text
}

fn header_line(first: &str, strategies: &[StrategyKind]) -> String {
    let mut h = vec![first.to_string()];
    h.extend(strategies.iter().map(|k| k.label().to_string()));
    h.join(",") + "\n"
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| FAILED.to_string(), |x| format!("{x:.6}"))
}

/// One file per core: `k,actual,<strategy>...` over the first run.
fn write_overlays(
    out: &Path,
    name: &str,
    data: &BenchmarkData,
    strategies: &[StrategyKind],
    estimates: &[Option<PowerEstimate>],
) -> Result<()> {
    let run = &data.runs[0];
    let actual = run.power.samples.as_ref().expect("generated power has samples");
    for core in 0..actual.ncols() {
        let mut text = header_line("k,actual", strategies);
        for k in 1..actual.nrows() {
            text.push_str(&format!("{k},{}", actual[(k, core)]));
            for est in estimates {
                text.push(',');
                match est {
                    Some(e) => text.push_str(&e.samples[(k - e.start, core)].to_string()),
                    None => text.push_str(FAILED),
                }
            }
            text.push('\n');
        }
        write_text(&out.join(format!("fig5_{name}_core{}.csv", core + 1)), &text)?;
    }
    Ok(())
}

/// Builds a golden reference per strategy from clean data at `cfg.seed`,
/// sweeps every attack and writes the sweep tables, heatmaps and the
/// band comparison.
pub fn run_task2(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<SweepReport>> {
    cfg.validate()?;
    let fp = cfg.floorplan()?;
    let data = BenchmarkData::generate(&fp, cfg.seed, &cfg.suite)?;
    let clean = SensorData::new(data.cooling.clone(), data.steady.dataset.clone());
    let mut reports = Vec::with_capacity(cfg.strategies.len());
    for &kind in &cfg.strategies {
        let golden = build_golden(&clean, kind, &cfg.nmf, None)?;
        save_model(&golden.model, &out.join(format!("golden_{}.json", kind.tag())))?;
        let rep = sweep(&golden, &clean, &cfg.xi_grid, &cfg.dt_grid)?;
        write_text(&out.join(format!("sweep_{}.csv", kind.tag())), &report::sweep_csv(&rep))?;
        write_text(&out.join(format!("trials_{}.csv", kind.tag())), &report::trials_csv(&rep))?;
        reports.push(rep);
    }
    report::render(out)?;
    Ok(reports)
}

/// Files [`run_task2`] writes for `strategies`, in order.
pub fn task2_files(out: &Path, strategies: &[StrategyKind]) -> Vec<PathBuf> {
    let mut files = Vec::new();
    for k in strategies {
        for stem in ["golden", "sweep", "trials"] {
            let ext = if stem == "golden" { "json" } else { "csv" };
            files.push(out.join(format!("{stem}_{}.{ext}", k.tag())));
        }
        files.push(out.join(format!("heatmap_{}.svg", k.tag())));
    }
    files.push(out.join(report::TABLE4));
    files
}

