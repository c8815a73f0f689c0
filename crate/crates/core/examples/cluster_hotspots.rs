//! Cluster the power-normalized steady-state rows and compare the hotspot
//! centroids with the true resistance matrix.

use bpilab::cluster::hotspot_centroids;
use bpilab::harness::{rel_frobenius, BenchmarkData, WorkloadSuite};
use bpilab::model::Floorplan;

fn main() -> bpilab::Result<()> {
    let name = std::env::args().nth(1).unwrap_or_else(|| "mesh2x2".into());
    let fp = Floorplan::by_name(&name)?;
    let data = BenchmarkData::generate(&fp, 0, &WorkloadSuite::default())?;
    let ds = &data.steady.dataset;

    let h = hotspot_centroids(ds)?;
    let kd = &h.k_distance;
    println!(
        "k-distance curve of {} points, elbow at rank {} -> eps {:.4} K/W",
        kd.curve.len(),
        kd.elbow_index,
        h.params.eps
    );
    println!(
        "MinPts {}: {} clusters, {} noise rows, outliers {:?}",
        h.params.min_pts,
        h.clustering.cluster_count(),
        h.clustering.noise().len(),
        h.outliers
    );
    for (c, unit) in h.cluster_unit.iter().enumerate() {
        let size = h.clustering.members(c).len();
        match unit {
            Some(u) => println!("  cluster {c} ({size} rows) -> unit {u}"),
            None => println!("  cluster {c} ({size} rows) -> unassigned"),
        }
    }
    for w in &h.warnings {
        println!("  warning: {w}");
    }
    // Row i of the centroid matrix is unit i's signature, i.e. column i of R.
    let r0 = h.centroids.transpose();
    println!("centroid init vs true R: {:.4} relative", rel_frobenius(&r0, &data.model.r));
    Ok(())
}
