//! Attack sweep on the heterogeneous floorplan: identity-initialized versus
//! clustered initialization, on a reduced offset grid.

use bpilab::cli::report::{heatmap_svg, load_sweep_csv};
use bpilab::cli::{run_task2, ExperimentConfig};
use bpilab::factorize::StrategyKind;

fn main() -> bpilab::Result<()> {
    let cfg = ExperimentConfig {
        floorplan: "hetero6".into(),
        strategies: vec![StrategyKind::IdentityBpi, StrategyKind::DbscanIcbpi],
        dt_grid: vec![-8.0, -3.0, -2.0, -1.0, 1.0, 2.0, 3.0, 8.0],
        ..ExperimentConfig::default()
    };
    let out = std::env::temp_dir().join("bpilab-sweep");
    let reports = run_task2(&cfg, &out)?;
    for rep in &reports {
        println!("{}:", rep.strategy.label());
        for r in rep.rates() {
            println!(
                "  dt {:>5}: detection failures {:5.1}%, identification failures {:5.1}%",
                r.dt_error, r.detection_rate, r.identification_rate
            );
        }
    }
    let rows = load_sweep_csv(&out.join("sweep_dbscan-icbpi.csv"))?;
    println!("heatmap is {} bytes of SVG", heatmap_svg("ICBPI", &rows).len());
    println!("tables in {}", out.display());
    Ok(())
}
