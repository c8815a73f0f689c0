//! Blind identification followed by online per-core power estimation.

use bpilab::factorize::{NmfConfig, StrategyKind};
use bpilab::harness::{rel_frobenius, BenchmarkData, WorkloadSuite};
use bpilab::identify::{avg_abs_error, estimate_power};
use bpilab::model::Floorplan;

fn main() -> bpilab::Result<()> {
    let fp = Floorplan::by_name("mesh2x2")?;
    let data = BenchmarkData::generate(&fp, 3, &WorkloadSuite::default())?;

    let fit = data.fit(StrategyKind::DbscanIcbpi, &NmfConfig::default())?;
    println!(
        "A residual {:.2e}, NMF {} iterations, R error {:.4}",
        fit.a_residual,
        fit.nmf.iterations_used,
        rel_frobenius(&fit.model.r, &data.model.r)
    );

    let run = &data.runs[0];
    let est = estimate_power(&fit.model, &run.thermal, &run.power.totals)?;
    let truth = run.power.samples.as_ref().expect("simulated power is per unit");
    println!("sample   actual (W)                estimated (W)");
    for k in [1, 50, 100, 200] {
        let a: Vec<String> = truth.row(k).iter().map(|v| format!("{v:5.2}")).collect();
        let e: Vec<String> = est.samples.row(k - est.start).iter().map(|v| format!("{v:5.2}")).collect();
        println!("{k:>6}   {}   {}", a.join(" "), e.join(" "));
    }
    let err = avg_abs_error(&est, &run.power)?;
    println!("average error over the run: {:.3}%", err.percent);

    let oracle = estimate_power(&data.model, &run.thermal, &run.power.totals)?;
    println!(
        "with the true model:         {:.2e}%",
        avg_abs_error(&oracle, &run.power)?.percent
    );
    Ok(())
}
