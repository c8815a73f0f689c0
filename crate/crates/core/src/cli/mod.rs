//! The `bpilab` command line: one subcommand per pipeline stage plus the two
//! evaluation tasks.
//!
//! Every subcommand accepts `--seed`, `--out` and `--config`. Flags override
//! the config file, which overrides the defaults. Exit codes are 0 on success,
//! 1 on usage errors and 2 on data or validation errors.

pub mod config;
pub mod report;
pub mod tasks;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;

use crate::cluster::{hotspot_centroids, Label};
use crate::error::{Error, Result};
use crate::factorize::StrategyKind;
use crate::harness::BenchmarkData;
use crate::identify::{avg_abs_error, estimate_power, fit_offline};
use crate::model::{
    load_model, load_power, load_steady, load_thermal, power_to_csv_from, save_model, save_power,
    save_steady, save_thermal, sniff_csv, write_text, CsvKind, Floorplan, BENCHMARK_FLOORPLANS,
};
use crate::sentinel::{detect, GoldenReference, SensorData, DEFAULT_XI};
use crate::simkit::{inject_attack, inject_attack_steady, synth_model, AttackScenario};

pub use config::ExperimentConfig;
pub use tasks::{run_task1, run_task2, table2_csv, Task1Table};

#[derive(Debug, Parser)]
#[command(name = "bpilab", version, about = "Blind per-core power identification and thermal sensor attack detection")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a ground-truth model (`--out` is a JSON file).
    GenModel {
        #[arg(long)]
        floorplan: Option<String>,
    },
    /// Simulate the cooling, steady-state and workload traces (`--out` is a directory).
    GenTraces {
        #[arg(long)]
        floorplan: Option<String>,
        /// Use this model instead of synthesizing one from the seed.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Offset one sensor of a thermal or steady-state CSV (`--out` is a CSV file).
    Inject {
        #[arg(long)]
        input: PathBuf,
        /// Sensor index, counting from 0.
        #[arg(long)]
        sensor: usize,
        /// Offset in kelvin.
        #[arg(long, allow_negative_numbers = true)]
        dt: f64,
    },
    /// Cluster steady-state rows and report the k-distance curve (`--out` is a directory).
    Cluster {
        #[arg(long)]
        steady: PathBuf,
    },
    /// Identify the model blindly (`--out` is a directory).
    Fit {
        #[arg(long)]
        cooling: PathBuf,
        #[arg(long)]
        steady: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<StrategyKind>,
    },
    /// Estimate per-unit power from a thermal trace and total power (`--out` is a CSV file).
    Estimate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Power CSV supplying the totals; per-unit columns, if present, are used to score the estimate.
        #[arg(long)]
        power: PathBuf,
    },
    /// Check runtime data against a golden model (`--out` is a JSON file).
    Detect {
        #[arg(long)]
        golden: PathBuf,
        #[arg(long)]
        cooling: PathBuf,
        #[arg(long)]
        steady: PathBuf,
        /// Workload trace used to rebuild the suspect sensor.
        #[arg(long, requires = "power")]
        trace: Option<PathBuf>,
        #[arg(long, requires = "trace")]
        power: Option<PathBuf>,
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<StrategyKind>,
        #[arg(long)]
        xi: Option<f64>,
    },
    /// Attack every sensor over the offset grid for each strategy (`--out` is a directory).
    Sweep {
        #[arg(long)]
        floorplan: Option<String>,
        #[arg(long, value_parser = parse_strategy, value_delimiter = ',')]
        strategy: Vec<StrategyKind>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        xi_grid: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        dt_grid: Option<Vec<f64>>,
    },
    /// Compare initialization strategies by power estimation error (`--out` is a directory).
    CompareInits {
        /// Floorplan names, or `all`.
        #[arg(long, value_delimiter = ',')]
        floorplan: Vec<String>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, value_parser = parse_strategy, value_delimiter = ',')]
        strategy: Vec<StrategyKind>,
    },
    /// Redraw heatmaps and the band table from the sweep tables in `--out`.
    Report,
}

fn parse_strategy(s: &str) -> std::result::Result<StrategyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Messages go to stdout, errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs a parsed command and returns the messages it would print.
pub fn run(cli: &Cli) -> Result<Vec<String>> {
    let mut cfg = match &cli.common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.common.out {
        cfg.out = Some(o.clone());
    }
    let mut msgs = Vec::new();
    match &cli.command {
        Command::GenModel { floorplan } => {
            set_floorplan(&mut cfg, floorplan.as_deref());
            let fp = checked_floorplan(&cfg)?;
            let model = synth_model(&fp, cfg.seed)?;
            let path = file_out(cli, &cfg, "model.json");
            save_model(&model, &path)?;
            msgs.push(format!("wrote {}", path.display()));
        }
        Command::GenTraces { floorplan, model } => {
            set_floorplan(&mut cfg, floorplan.as_deref());
            let fp = checked_floorplan(&cfg)?;
            let model = match model {
                Some(p) => load_model(p)?,
                None => synth_model(&fp, cfg.seed)?,
            };
            let data = BenchmarkData::generate_with_model(&fp, model, cfg.seed, &cfg.suite)?;
            let dir = cfg.out_dir();
            save_model(&data.model, &dir.join("model.json"))?;
            save_thermal(&data.cooling, &dir.join("cooling.csv"))?;
            save_steady(&data.steady.dataset, &dir.join("steady.csv"))?;
            for (r, run) in data.runs.iter().enumerate() {
                save_thermal(&run.thermal, &dir.join(format!("run{r}_thermal.csv")))?;
                save_power(&run.power, &dir.join(format!("run{r}_power.csv")))?;
            }
            msgs.push(format!("wrote {} runs and calibration traces to {}", data.runs.len(), dir.display()));
        }
        Command::Inject { input, sensor, dt } => {
            let s = AttackScenario {
                sensor: *sensor,
                dt_error: *dt,
                xi: DEFAULT_XI,
            };
            let path = file_out(cli, &cfg, "attacked.csv");
            match sniff_csv(input)? {
                CsvKind::Thermal => save_thermal(&inject_attack(&load_thermal(input)?, &s)?, &path)?,
                CsvKind::Steady => save_steady(&inject_attack_steady(&load_steady(input)?, &s)?, &path)?,
                CsvKind::Power => {
                    return Err(Error::Validation(format!(
                        "{} is a power trace; only thermal and steady-state CSVs carry sensor readings",
                        input.display()
                    )))
                }
            }
            msgs.push(format!("wrote {}", path.display()));
        }
        Command::Cluster { steady } => {
            let ds = load_steady(steady)?;
            let h = hotspot_centroids(&ds)?;
            let dir = cfg.out_dir();
            let mut labels = String::from("exp,label,core\n");
            for (i, (l, c)) in h.clustering.labels.iter().zip(&h.clustering.core_flags).enumerate() {
                let l = match l {
                    Label::Cluster(c) => c.to_string(),
                    Label::Noise => "-1".into(),
                };
                labels.push_str(&format!("{i},{l},{}\n", u8::from(*c)));
            }
            write_text(&dir.join("labels.csv"), &labels)?;
            let mut kd = format!(
                "# k={} eps={} elbow={}\nrank,distance\n",
                h.params.min_pts - 1,
                h.params.eps,
                h.k_distance.elbow_index
            );
            for (i, d) in h.k_distance.curve.iter().enumerate() {
                kd.push_str(&format!("{i},{d}\n"));
            }
            write_text(&dir.join("kdistance.csv"), &kd)?;
            let n = ds.n();
            let mut cents = String::from("unit");
            for i in 1..=n {
                cents.push_str(&format!(",c_{i}"));
            }
            cents.push_str(",source\n");
            for u in 0..n {
                cents.push_str(&u.to_string());
                for v in h.centroids.row(u).iter() {
                    cents.push_str(&format!(",{v}"));
                }
                let src = match h.cluster_unit.iter().position(|&x| x == Some(u)) {
                    Some(c) => format!("cluster{c}"),
                    None => "fallback".into(),
                };
                cents.push_str(&format!(",{src}\n"));
            }
            write_text(&dir.join("hotspots.csv"), &cents)?;
            msgs.push(format!(
                "{} clusters, {} noise rows, eps {:.6}; wrote {}",
                h.clustering.cluster_count(),
                h.clustering.noise().len(),
                h.params.eps,
                dir.display()
            ));
            msgs.extend(h.warnings.iter().map(|w| format!("warning: {w}")));
        }
        Command::Fit { cooling, steady, strategy } => {
            let kind = strategy.unwrap_or(StrategyKind::DbscanIcbpi);
            cfg.nmf.validate()?;
            let cool = load_thermal(cooling)?;
            let ds = load_steady(steady)?;
            let fit = fit_offline(&cool, &ds, kind, &cfg.nmf)?;
            let dir = cfg.out_dir();
            save_model(&fit.model, &dir.join("model.json"))?;
            let diag = FitDiagnostics {
                strategy: kind,
                iterations: fit.nmf.iterations_used,
                final_objective: fit.nmf.final_objective(),
                a_residual: fit.a_residual,
                rows_used: fit.nmf.rows_used.clone(),
                warnings: fit.warnings.clone(),
                objective_curve: fit.nmf.objective_curve.clone(),
            };
            write_text(&dir.join("fit.json"), &to_json(&diag))?;
            msgs.push(format!(
                "{} fit: {} iterations, objective {:.6e}; wrote {}",
                kind.label(),
                diag.iterations,
                diag.final_objective,
                dir.display()
            ));
            msgs.extend(fit.warnings.iter().map(|w| format!("warning: {w}")));
        }
        Command::Estimate { model, trace, power } => {
            let m = load_model(model)?;
            let t = load_thermal(trace)?;
            let p = load_power(power)?;
            let est = estimate_power(&m, &t, &p.totals)?;
            let path = file_out(cli, &cfg, "estimate.csv");
            write_text(&path, &power_to_csv_from(&est.to_trace()?, est.start))?;
            msgs.push(format!("wrote {}", path.display()));
            if p.samples.is_some() {
                let e = avg_abs_error(&est, &p)?;
                msgs.push(format!("average error {:.4}% ({} zero-power entries skipped)", e.percent, e.excluded));
            }
        }
        Command::Detect { golden, cooling, steady, trace, power, strategy, xi } => {
            let kind = strategy.unwrap_or(StrategyKind::DbscanIcbpi);
            let xi = xi.unwrap_or(DEFAULT_XI);
            cfg.nmf.validate()?;
            let g = GoldenReference::from_model(load_model(golden)?, kind, cfg.nmf);
            let mut data = SensorData::new(load_thermal(cooling)?, load_steady(steady)?);
            if let (Some(t), Some(p)) = (trace, power) {
                data = data.with_workload(load_thermal(t)?, load_power(p)?.totals);
            }
            let rep = detect(&g, &data, xi)?;
            let out = DetectionOutput {
                strategy: kind,
                xi,
                attacked: rep.attacked,
                deviation: rep.deviation,
                suspect: rep.suspect,
                per_unit_scores: rep.per_unit_scores.clone(),
                r_runtime: rep.r_runtime.row_iter().map(|r| r.iter().copied().collect()).collect(),
                t_hat: rep.t_hat.as_ref().map(|v: &DVector<f64>| v.iter().copied().collect()),
            };
            let path = file_out(cli, &cfg, "detect.json");
            write_text(&path, &to_json(&out))?;
            msgs.push(match rep.suspect {
                Some(s) if rep.attacked => format!("attack detected (deviation {:.4} > {xi}); suspect sensor {s}", rep.deviation),
                _ if rep.attacked => format!("attack detected (deviation {:.4} > {xi}); no suspect", rep.deviation),
                _ => format!("no attack (deviation {:.4} <= {xi})", rep.deviation),
            });
            msgs.push(format!("wrote {}", path.display()));
        }
        Command::Sweep { floorplan, strategy, xi_grid, dt_grid } => {
            set_floorplan(&mut cfg, floorplan.as_deref());
            if !strategy.is_empty() {
                cfg.strategies = strategy.clone();
            }
            if let Some(g) = xi_grid {
                cfg.xi_grid = g.clone();
            }
            if let Some(g) = dt_grid {
                cfg.dt_grid = g.clone();
            }
            cfg.validate()?;
            let dir = cfg.out_dir();
            let reports = run_task2(&cfg, &dir)?;
            for r in &reports {
                msgs.push(format!(
                    "{}: {} failures with |dt| <= 3, {} with |dt| >= 6",
                    r.strategy.label(),
                    r.failures_in_band(0.0, 3.0),
                    r.failures_in_band(6.0, f64::INFINITY)
                ));
            }
            msgs.push(format!("wrote {}", dir.display()));
        }
        Command::CompareInits { floorplan, seeds, strategy } => {
            if let Some(s) = seeds {
                cfg.seeds = *s;
            }
            if !strategy.is_empty() {
                cfg.strategies = strategy.clone();
            }
            let names: Vec<String> = if floorplan.iter().any(|f| f == "all") {
                BENCHMARK_FLOORPLANS.iter().map(|s| s.to_string()).collect()
            } else if floorplan.is_empty() {
                vec![cfg.floorplan.clone()]
            } else {
                floorplan.clone()
            };
            let dir = cfg.out_dir();
            let mut tables = Vec::new();
            for name in names {
                let c = ExperimentConfig { floorplan: name, ..cfg.clone() };
                c.validate()?;
                let t = run_task1(&c, &dir)?;
                msgs.extend(t.failures.iter().map(|f| format!("failed: {f}")));
                let means: Vec<String> = t
                    .strategies
                    .iter()
                    .enumerate()
                    .map(|(j, k)| match t.mean(j) {
                        Some(m) => format!("{} {m:.3}%", k.label()),
                        None => format!("{} {}", k.label(), report::FAILED),
                    })
                    .collect();
                msgs.push(format!("{}: {}", t.floorplan, means.join(", ")));
                tables.push(t);
            }
            write_text(&dir.join("table2.csv"), &table2_csv(&tables))?;
            msgs.push(format!("wrote {}", dir.display()));
        }
        Command::Report => {
            let dir = cfg.out_dir();
            for p in report::render(&dir)? {
                msgs.push(format!("wrote {}", p.display()));
            }
        }
    }
    Ok(msgs)
}

fn set_floorplan(cfg: &mut ExperimentConfig, name: Option<&str>) {
    if let Some(n) = name {
        cfg.floorplan = n.to_string();
    }
}

fn checked_floorplan(cfg: &ExperimentConfig) -> Result<Floorplan> {
    if !BENCHMARK_FLOORPLANS.contains(&cfg.floorplan.as_str()) {
        return Err(Error::Usage(format!(
            "floorplan '{}' is not one of {}",
            cfg.floorplan,
            BENCHMARK_FLOORPLANS.join(", ")
        )));
    }
    cfg.floorplan()
}

/// `--out` as given, else `name` inside the default output directory.
fn file_out(cli: &Cli, cfg: &ExperimentConfig, name: &str) -> PathBuf {
    match &cli.common.out {
        Some(p) => p.clone(),
        None => cfg.out_dir().join(name),
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

#[derive(Debug, Serialize)]
struct FitDiagnostics {
    strategy: StrategyKind,
    iterations: usize,
    final_objective: f64,
    a_residual: f64,
    rows_used: Vec<usize>,
    warnings: Vec<String>,
    objective_curve: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct DetectionOutput {
    strategy: StrategyKind,
    xi: f64,
    attacked: bool,
    deviation: f64,
    suspect: Option<usize>,
    per_unit_scores: Vec<f64>,
    r_runtime: Vec<Vec<f64>>,
    t_hat: Option<Vec<f64>>,
}
