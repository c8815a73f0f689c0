//! Build a golden reference from clean calibration data, then check a copy
//! read through one offset sensor and rebuild that sensor's temperature.

use bpilab::factorize::{NmfConfig, StrategyKind};
use bpilab::harness::{BenchmarkData, WorkloadSuite};
use bpilab::model::Floorplan;
use bpilab::sentinel::{build_golden, detect, SensorData, DEFAULT_XI};

fn main() -> bpilab::Result<()> {
    let fp = Floorplan::by_name("hetero6")?;
    let data = BenchmarkData::generate(&fp, 0, &WorkloadSuite::default())?;
    let run = &data.runs[0];
    let clean = SensorData::new(data.cooling.clone(), data.steady.dataset.clone())
        .with_workload(run.thermal.clone(), run.power.totals.clone());

    let golden = build_golden(&clean, StrategyKind::DbscanIcbpi, &NmfConfig::default(), None)?;
    let quiet = detect(&golden, &clean, DEFAULT_XI)?;
    println!("clean data: deviation {:.4}, attacked {}", quiet.deviation, quiet.attacked);

    let (sensor, offset) = (4, 8.0);
    let attacked = clean.attacked(sensor, offset)?;
    let rep = detect(&golden, &attacked, DEFAULT_XI)?;
    println!(
        "sensor {sensor} offset by {offset} K: deviation {:.4}, suspect {:?}",
        rep.deviation, rep.suspect
    );
    let scores: Vec<String> = rep.per_unit_scores.iter().map(|s| format!("{s:.3}")).collect();
    println!("leave-one-out scores: [{}]", scores.join(", "));

    if let Some(t_hat) = &rep.t_hat {
        let read = run.thermal.samples.column(sensor);
        let mut worst: f64 = 0.0;
        for k in 1..run.thermal.len() {
            worst = worst.max((t_hat[k - 1] - read[k]).abs());
        }
        println!("rebuilt sensor {sensor}: largest gap to the true reading {worst:.3} K");
    }
    Ok(())
}
