//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use bpilab::cluster::{dbscan, DbscanParams};
use bpilab::factorize::nmf::nmf_from;
use bpilab::factorize::qp::objective;
use bpilab::factorize::{nmf, nnls, simplex_ls, InitStrategy, NmfConfig, StrategyKind};
use bpilab::harness::{rel_frobenius, BenchmarkData, WorkloadSuite};
use bpilab::identify::{estimate_a, estimate_power};
use bpilab::model::{Floorplan, ThermalTrace, DEFAULT_AMBIENT_K, BENCHMARK_FLOORPLANS};
use bpilab::sentinel::{build_golden, default_dt_grid, default_xi_grid, sweep, SensorData, SweepReport};
use bpilab::simkit::synth_model;
use common::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

const SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn criterion_1() -> Outcome {
    let cfg = NmfConfig::default();
    let kinds = [StrategyKind::IdentityBpi, StrategyKind::SteadyStateBpiss, StrategyKind::DbscanIcbpi];
    let mut pass = true;
    let mut parts = Vec::new();
    for name in BENCHMARK_FLOORPLANS {
        let fp = Floorplan::by_name(name).unwrap();
        let mut sums = [0.0; 3];
        for seed in 0..SEEDS {
            let data = BenchmarkData::generate(&fp, seed, &WorkloadSuite::default()).unwrap();
            for (s, kind) in sums.iter_mut().zip(kinds) {
                let fit = data.fit(kind, &cfg).unwrap();
                *s += data.power_error(&fit.model).unwrap().percent;
            }
        }
        let [bpi, bpiss, icbpi] = sums.map(|s| s / SEEDS as f64);
        let mut ok = icbpi < bpiss && bpiss < bpi;
        if name == "mesh2x2" {
            ok &= icbpi <= 0.5 * bpiss;
        }
        pass &= ok;
        parts.push(format!("{name} BPI {bpi:.2}% BPISS {bpiss:.2}% ICBPI {icbpi:.2}%"));
    }
    outcome(pass, format!("mean error over {SEEDS} seeds: {}", parts.join("; ")))
}

fn hetero6_sweeps(seed: u64) -> (SweepReport, SweepReport) {
    let fp = Floorplan::by_name("hetero6").unwrap();
    let data = BenchmarkData::generate(&fp, seed, &WorkloadSuite::default()).unwrap();
    let clean = SensorData::new(data.cooling.clone(), data.steady.dataset.clone());
    let cfg = NmfConfig::default();
    let run = |kind| {
        let golden = build_golden(&clean, kind, &cfg, None).unwrap();
        sweep(&golden, &clean, &default_xi_grid(), &default_dt_grid()).unwrap()
    };
    (run(StrategyKind::DbscanIcbpi), run(StrategyKind::IdentityBpi))
}

fn criterion_2() -> Outcome {
    let mut large_det = 0;
    let mut large_ident = 0;
    let mut baseline_worse = 0;
    let mut bands = Vec::new();
    for seed in 0..SEEDS {
        let (icbpi, bpi) = hetero6_sweeps(seed);
        for c in icbpi.cells.iter().filter(|c| c.dt_error.abs() >= 6.0) {
            large_det += c.detection_failures;
            large_ident += c.identification_failures;
        }
        let (ours, theirs) = (icbpi.failures_in_band(0.0, 3.0), bpi.failures_in_band(0.0, 3.0));
        if theirs > ours {
            baseline_worse += 1;
        }
        bands.push(format!("{theirs}/{ours}"));
    }
    outcome(
        large_det == 0 && large_ident == 0 && baseline_worse >= 8,
        format!(
            "ICBPI at |dt|>=6: {large_det} detection, {large_ident} identification failures; \
             BPI worse in |dt|<=3 on {baseline_worse}/{SEEDS} seeds (BPI/ICBPI failures {})",
            bands.join(" ")
        ),
    )
}

fn criterion_3() -> Outcome {
    // (a) a known stable A from a 200-sample cooling trace.
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.90, 0.03, 0.02, 0.00, //
            0.03, 0.85, 0.00, 0.04, //
            0.02, 0.00, 0.88, 0.03, //
            0.00, 0.04, 0.03, 0.80,
        ],
    );
    let mut t = DVector::from_vec(vec![12.0, 7.0, 9.0, 4.0]);
    let mut samples = DMatrix::zeros(200, 4);
    for k in 0..200 {
        samples.row_mut(k).copy_from(&t.map(|v| v + DEFAULT_AMBIENT_K).transpose());
        t = &a * t;
    }
    let cooling = ThermalTrace::new(0.1, DEFAULT_AMBIENT_K, samples).unwrap();
    let a_err = rel_frobenius(&estimate_a(&cooling).unwrap().a, &a);

    // (b) per-sample power with the true model.
    let mut p_err: f64 = 0.0;
    for name in BENCHMARK_FLOORPLANS {
        let fp = Floorplan::by_name(name).unwrap();
        let data = BenchmarkData::generate(&fp, 0, &WorkloadSuite::default()).unwrap();
        for run in &data.runs {
            let est = estimate_power(&data.model, &run.thermal, &run.power.totals).unwrap();
            let actual = run.power.samples.as_ref().unwrap();
            for r in 0..est.samples.nrows() {
                p_err = p_err.max((est.samples.row(r) - actual.row(r + est.start)).amax());
            }
        }
    }

    // (c) steady state through B agrees with R.
    let mut rng = rng(3);
    let mut ss_err: f64 = 0.0;
    for name in BENCHMARK_FLOORPLANS {
        let fp = Floorplan::by_name(name).unwrap();
        for seed in 0..SEEDS {
            let m = synth_model(&fp, seed).unwrap();
            let lu = (DMatrix::identity(fp.n, fp.n) - &m.a).lu();
            for _ in 0..10 {
                let p = DVector::from_fn(fp.n, |_, _| rng.gen_range(0.0..fp.power_budget / fp.n as f64));
                ss_err = ss_err.max((lu.solve(&(&m.b * &p)).unwrap() - &m.r * &p).amax());
            }
        }
    }
    outcome(
        a_err <= 1e-4 && p_err <= 1e-6 && ss_err <= 1e-6,
        format!("A rel err {a_err:.2e}, power max err {p_err:.2e} W, steady-state max gap {ss_err:.2e} K"),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = rng(4);
    let mut nnls_gap: f64 = 0.0;
    for _ in 0..100 {
        let m = random_matrix(&mut rng, 4, 3, -1.0, 1.0);
        let y = DVector::from_fn(4, |_, _| rng.gen_range(-2.0..2.0));
        let x = nnls(&m, &y).unwrap();
        nnls_gap = nnls_gap.max((objective(&m, &y, &x) - nnls_by_enumeration(&m, &y)).abs());
    }
    let mut simplex_gap: f64 = 0.0;
    for _ in 0..100 {
        let m = random_matrix(&mut rng, 3, 3, 0.0, 1.0);
        let y = DVector::from_fn(3, |_, _| rng.gen_range(0.0..1.0));
        let x = simplex_ls(&m, &y, 1.0).unwrap();
        simplex_gap = simplex_gap.max((objective(&m, &y, &x) - simplex_grid_min(&m, &y, 1.0, 1e-3)).abs());
    }
    outcome(
        nnls_gap <= 1e-6 && simplex_gap <= 1e-4,
        format!("nnls max gap {nnls_gap:.2e}, simplex max gap {simplex_gap:.2e}"),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = rng(5);
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_sum: f64 = 0.0;
    let mut negative = 0;
    for _ in 0..100 {
        let n = rng.gen_range(2..6);
        let m = rng.gen_range(n..4 * n);
        let r = random_matrix(&mut rng, n, n, 0.05, 1.5);
        let p = random_matrix(&mut rng, n, m, 0.1, 20.0);
        let v = &r * &p + random_matrix(&mut rng, n, m, 0.0, 0.1);
        let totals = DVector::from_iterator(m, p.column_iter().map(|c| c.sum()));
        let r0 = random_matrix(&mut rng, n, n, 0.05, 1.5);
        let p0 = random_matrix(&mut rng, n, m, 0.1, 20.0);
        let iters = 40;
        // Each truncated run exposes the iterate after `k` steps.
        for k in 1..=iters {
            let cfg = NmfConfig { max_iters: k, tol: 1e-300, ..NmfConfig::default() };
            let res = nmf_from(&v, &r0, &p0, &totals, &cfg).unwrap();
            for j in 0..m {
                worst_sum = worst_sum.max((res.p_hat.column(j).sum() - totals[j]).abs() / totals[j]);
            }
            negative += res.r_hat.iter().chain(res.p_hat.iter()).filter(|&&x| x < 0.0).count();
            if k == iters {
                for w in res.objective_curve.windows(2) {
                    worst_rise = worst_rise.max(w[1] - w[0]);
                }
            }
        }
    }
    outcome(
        worst_rise <= 1e-10 && negative == 0 && worst_sum <= 1e-9,
        format!("largest objective rise {worst_rise:.2e}, negative entries {negative}, worst column-sum error {worst_sum:.2e}"),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = rng(6);
    let mut mismatches = Vec::new();
    for case in 0..50 {
        let points = blobs(&mut rng, 200);
        let params = DbscanParams::new(rng.gen_range(0.02..0.12), rng.gen_range(2..8)).unwrap();
        let got = dbscan(&points, params);
        let reference = dbscan_reference(&points, params.eps, params.min_pts);
        let labels: Vec<Option<usize>> = got.labels.iter().map(|l| l.cluster()).collect();
        if got.core_flags != reference.core {
            mismatches.push(format!("case {case}: core flags"));
        }
        if let Err(e) = compare_with_reference(&labels, &reference) {
            mismatches.push(format!("case {case}: {e}"));
        }
        let mut perm: Vec<usize> = (0..points.len()).collect();
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let shuffled: Vec<Vec<f64>> = perm.iter().map(|&i| points[i].clone()).collect();
        let b = dbscan(&shuffled, params);
        if perm.iter().enumerate().any(|(k, &i)| b.core_flags[k] != got.core_flags[i]) {
            mismatches.push(format!("case {case}: permuted core flags"));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("50 datasets, {} mismatches {:?}", mismatches.len(), mismatches),
    )
}

fn criterion_7() -> Outcome {
    let cfg = NmfConfig::default();
    let mut pass = true;
    let mut parts = Vec::new();
    for name in BENCHMARK_FLOORPLANS {
        let fp = Floorplan::by_name(name).unwrap();
        let mut good = 0;
        let mut worst: f64 = 0.0;
        for seed in 0..SEEDS {
            let data = BenchmarkData::generate(&fp, seed, &WorkloadSuite::default()).unwrap();
            let ds = &data.steady.dataset;
            let m = ds.experiments();
            let extra: Vec<(Vec<f64>, f64)> = (0..3)
                .map(|i| {
                    let r = (seed as usize * 7 + i * 5) % m;
                    (ds.t_s.row(r).iter().map(|v| v * 10.0).collect(), ds.p_total[r])
                })
                .collect();
            let with_outliers = ds.with_extra_rows(&extra).unwrap();
            let change = |kind| {
                let clean = nmf(ds, &InitStrategy::prepare(kind, ds).unwrap(), &cfg).unwrap();
                let init = InitStrategy::prepare(kind, &with_outliers).unwrap();
                let dirty = nmf(&with_outliers, &init, &cfg).unwrap();
                rel_frobenius(&dirty.r_hat, &clean.r_hat)
            };
            let icbpi = change(StrategyKind::DbscanIcbpi);
            let bpiss = change(StrategyKind::SteadyStateBpiss);
            worst = worst.max(icbpi);
            if icbpi <= 0.01 && bpiss > icbpi {
                good += 1;
            }
        }
        pass &= good >= 8;
        parts.push(format!("{name} {good}/{SEEDS} (worst ICBPI change {:.2}%)", 100.0 * worst));
    }
    outcome(pass, parts.join("; "))
}

fn cli_pipeline(root: &Path) {
    let p = |name: &str| root.join(name).to_str().unwrap().to_string();
    let runs: Vec<Vec<String>> = vec![
        vec!["gen-model".into(), "--floorplan".into(), "hetero6".into(), "--out".into(), p("model.json")],
        vec!["gen-traces".into(), "--floorplan".into(), "mesh2x2".into(), "--out".into(), p("data")],
        vec!["cluster".into(), "--steady".into(), p("data/steady.csv"), "--out".into(), p("cluster")],
        vec![
            "fit".into(), "--cooling".into(), p("data/cooling.csv"), "--steady".into(), p("data/steady.csv"),
            "--strategy".into(), "icbpi".into(), "--out".into(), p("fit"),
        ],
        vec![
            "estimate".into(), "--model".into(), p("fit/model.json"), "--trace".into(), p("data/run1_thermal.csv"),
            "--power".into(), p("data/run1_power.csv"), "--out".into(), p("estimate.csv"),
        ],
        vec![
            "inject".into(), "--input".into(), p("data/steady.csv"), "--sensor".into(), "1".into(),
            "--dt".into(), "-7".into(), "--out".into(), p("steady_att.csv"),
        ],
        vec![
            "inject".into(), "--input".into(), p("data/cooling.csv"), "--sensor".into(), "1".into(),
            "--dt".into(), "-7".into(), "--out".into(), p("cooling_att.csv"),
        ],
        vec![
            "detect".into(), "--golden".into(), p("fit/model.json"), "--cooling".into(), p("cooling_att.csv"),
            "--steady".into(), p("steady_att.csv"), "--trace".into(), p("data/run1_thermal.csv"),
            "--power".into(), p("data/run1_power.csv"), "--strategy".into(), "icbpi".into(), "--out".into(),
            p("detect.json"),
        ],
        vec![
            "sweep".into(), "--floorplan".into(), "mesh2x2".into(), "--xi-grid".into(), "0.03,0.08".into(),
            "--dt-grid".into(), "-9,-2,1,6".into(), "--out".into(), p("sweep"),
        ],
        vec!["report".into(), "--out".into(), p("sweep")],
        vec![
            "compare-inits".into(), "--floorplan".into(), "mesh2x2,hetero6".into(), "--seeds".into(), "2".into(),
            "--out".into(), p("inits"),
        ],
    ];
    for args in runs {
        let mut full = args.clone();
        full.extend(["--seed".to_string(), "11".to_string()]);
        let refs: Vec<&str> = full.iter().map(String::as_str).collect();
        assert_eq!(bpilab_quiet(&refs), 0, "bpilab {}", args.join(" "));
    }
}

fn criterion_8() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path());
    cli_pipeline(b.path());
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let differing: Vec<String> = fa
        .iter()
        .filter(|(k, v)| fb.get(*k) != Some(*v))
        .map(|(k, _)| k.display().to_string())
        .collect();
    let same_set = fa.keys().eq(fb.keys());
    outcome(
        same_set && differing.is_empty(),
        format!("{} files compared, differing {differing:?}", fa.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 init ordering of power estimation error", criterion_1),
        ("2 detection band on hetero6", criterion_2),
        ("3 exact-recovery round trips", criterion_3),
        ("4 solver oracle equivalence", criterion_4),
        ("5 NMF invariants", criterion_5),
        ("6 DBSCAN oracle equivalence", criterion_6),
        ("7 outlier robustness", criterion_7),
        ("8 CLI determinism", criterion_8),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                outcome(false, format!("panicked: {msg}"))
            });
        if !res.pass {
            failed += 1;
        }
        println!(
            "{} criterion {name}: {} [{:.1}s]",
            if res.pass { "PASS" } else { "FAIL" },
            res.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
