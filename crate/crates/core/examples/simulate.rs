//! Synthesize a ground-truth thermal model and simulate the calibration and
//! workload traces for one floorplan.
//!
//! cargo run --release --example simulate -- [floorplan] [seed]

use bpilab::harness::{BenchmarkData, WorkloadSuite};
use bpilab::model::{spectral_radius, validate_model, Floorplan};

fn main() -> bpilab::Result<()> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "mesh2x2".into());
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let fp = Floorplan::by_name(&name)?;
    let data = BenchmarkData::generate(&fp, seed, &WorkloadSuite::default())?;
    let m = &data.model;
    println!("{name}: {} units, budget {} W", fp.n, fp.power_budget);
    println!("spectral radius of A: {:.4}", spectral_radius(&m.a));
    println!("model violations: {}", validate_model(m).len());
    println!("R (K/W):{:.3}", m.r);

    let c = &data.cooling;
    println!(
        "cooling trace: {} samples, hottest start rise {:.2} K",
        c.len(),
        c.rises().row(0).max()
    );
    let ds = &data.steady.dataset;
    println!("steady-state dataset: {} experiments", ds.experiments());
    for (r, run) in data.runs.iter().enumerate() {
        let t = run.thermal.rises();
        println!(
            "run {r}: {} samples, mean total {:.2} W, peak rise {:.2} K",
            run.thermal.len(),
            run.power.totals.mean(),
            t.max()
        );
    }
    Ok(())
}
