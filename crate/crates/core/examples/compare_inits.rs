//! Power estimation error of the three NMF initializations on one floorplan,
//! averaged over a few seeds.
//!
//! cargo run --release --example compare_inits -- [floorplan] [seeds]

use std::path::PathBuf;

use bpilab::cli::{run_task1, ExperimentConfig};

fn main() -> bpilab::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = ExperimentConfig {
        floorplan: args.next().unwrap_or_else(|| "mesh2x2".into()),
        seeds: args.next().and_then(|s| s.parse().ok()).unwrap_or(3),
        ..ExperimentConfig::default()
    };
    let out = std::env::temp_dir().join("bpilab-compare-inits");
    let table = run_task1(&cfg, &out)?;

    print!("{:>6}", "seed");
    for k in &table.strategies {
        print!("{:>10}", k.label());
    }
    println!();
    for (seed, row) in table.seeds.iter().zip(&table.errors) {
        print!("{seed:>6}");
        for e in row {
            match e {
                Some(v) => print!("{v:>9.3}%"),
                None => print!("{:>10}", "failed"),
            }
        }
        println!();
    }
    print!("{:>6}", "mean");
    for j in 0..table.strategies.len() {
        print!("{:>9.3}%", table.mean(j).unwrap_or(f64::NAN));
    }
    println!();
    println!("tables and per-core overlays in {}", PathBuf::from(&out).display());
    Ok(())
}
