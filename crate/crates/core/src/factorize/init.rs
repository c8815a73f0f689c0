//! Starting points for the factorization.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cluster::{hotspot_centroids, stressed_units, Hotspots};
use crate::error::{Error, Result};
use crate::model::SteadyStateDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    #[serde(rename = "identity-bpi")]
    IdentityBpi,
    #[serde(rename = "steady-state-bpiss")]
    SteadyStateBpiss,
    #[serde(rename = "dbscan-icbpi")]
    DbscanIcbpi,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 3] = [
        StrategyKind::IdentityBpi,
        StrategyKind::SteadyStateBpiss,
        StrategyKind::DbscanIcbpi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            StrategyKind::IdentityBpi => "identity-bpi",
            StrategyKind::SteadyStateBpiss => "steady-state-bpiss",
            StrategyKind::DbscanIcbpi => "dbscan-icbpi",
        }
    }

    /// Short column label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            StrategyKind::IdentityBpi => "BPI",
            StrategyKind::SteadyStateBpiss => "BPISS",
            StrategyKind::DbscanIcbpi => "ICBPI",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity-bpi" | "bpi" | "identity" => Ok(StrategyKind::IdentityBpi),
            "steady-state-bpiss" | "bpiss" => Ok(StrategyKind::SteadyStateBpiss),
            "dbscan-icbpi" | "icbpi" => Ok(StrategyKind::DbscanIcbpi),
            other => Err(Error::Usage(format!(
                "unknown strategy '{other}' (expected identity-bpi, steady-state-bpiss or dbscan-icbpi)"
            ))),
        }
    }
}

/// A prepared initialization together with the statistics it was built from.
#[derive(Debug, Clone, PartialEq)]
pub enum InitStrategy {
    IdentityBpi,
    /// Column `j` is the mean normalized row over experiments stressing unit `j`.
    SteadyStateBpiss { stressed_means: DMatrix<f64> },
    DbscanIcbpi { hotspots: Box<Hotspots> },
}

impl InitStrategy {
    pub fn prepare(kind: StrategyKind, ds: &SteadyStateDataset) -> Result<Self> {
        Ok(match kind {
            StrategyKind::IdentityBpi => InitStrategy::IdentityBpi,
            StrategyKind::SteadyStateBpiss => InitStrategy::SteadyStateBpiss {
                stressed_means: stressed_means(ds)?,
            },
            StrategyKind::DbscanIcbpi => InitStrategy::DbscanIcbpi {
                hotspots: Box::new(hotspot_centroids(ds)?),
            },
        })
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            InitStrategy::IdentityBpi => StrategyKind::IdentityBpi,
            InitStrategy::SteadyStateBpiss { .. } => StrategyKind::SteadyStateBpiss,
            InitStrategy::DbscanIcbpi { .. } => StrategyKind::DbscanIcbpi,
        }
    }

    /// Checks that the payload is sized for `n` units.
    pub fn check(&self, n: usize) -> Result<()> {
        let shape = match self {
            InitStrategy::IdentityBpi => return Ok(()),
            InitStrategy::SteadyStateBpiss { stressed_means } => stressed_means.shape(),
            InitStrategy::DbscanIcbpi { hotspots } => hotspots.centroids.shape(),
        };
        if shape != (n, n) {
            return Err(Error::Shape(format!(
                "{} payload is {}x{}, expected {n}x{n}",
                self.kind(),
                shape.0,
                shape.1
            )));
        }
        Ok(())
    }

    /// Rows of the dataset the factorization should use. The clustered
    /// strategy leaves out the rows it flagged as outliers.
    pub fn training_rows(&self, ds: &SteadyStateDataset) -> Vec<usize> {
        match self {
            InitStrategy::DbscanIcbpi { hotspots } => {
                let out = &hotspots.outliers;
                let kept: Vec<usize> = (0..ds.experiments()).filter(|i| !out.contains(i)).collect();
                if kept.len() < ds.n() {
                    (0..ds.experiments()).collect()
                } else {
                    kept
                }
            }
            _ => (0..ds.experiments()).collect(),
        }
    }

    /// Initial `(R0, P0)` for `ds`, with `P0` being `N x M`.
    pub fn initial_factors(&self, ds: &SteadyStateDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let n = ds.n();
        self.check(n)?;
        Ok(match self {
            InitStrategy::IdentityBpi => (DMatrix::identity(n, n), equal_split(ds)),
            InitStrategy::SteadyStateBpiss { stressed_means } => {
                (stressed_means.clone(), ratio_split(ds))
            }
            InitStrategy::DbscanIcbpi { hotspots } => {
                (hotspots.centroids.transpose(), ratio_split(ds))
            }
        })
    }
}

/// `R0 = I`, every total split evenly.
pub fn init_bpi(ds: &SteadyStateDataset) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = ds.n();
    (DMatrix::identity(n, n), equal_split(ds))
}

/// `R0` from stressed-unit means, totals split by temperature ratio.
pub fn init_bpiss(ds: &SteadyStateDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    Ok((stressed_means(ds)?, ratio_split(ds)))
}

/// `R0` from the hotspot centroids (column `i` is unit `i`'s signature),
/// totals split by temperature ratio.
pub fn init_icbpi(ds: &SteadyStateDataset) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let h = hotspot_centroids(ds)?;
    Ok((h.centroids.transpose(), ratio_split(ds)))
}

fn equal_split(ds: &SteadyStateDataset) -> DMatrix<f64> {
    let n = ds.n();
    DMatrix::from_fn(n, ds.experiments(), |_, j| ds.p_total[j] / n as f64)
}

/// `P0[i][j] = p_total[j] * t_s[j][i] / sum_u t_s[j][u]`; rows without a
/// positive rise sum fall back to an even split.
pub fn ratio_split(ds: &SteadyStateDataset) -> DMatrix<f64> {
    let n = ds.n();
    let m = ds.experiments();
    let mut p = DMatrix::zeros(n, m);
    for j in 0..m {
        let row = ds.t_s.row(j);
        let pos: Vec<f64> = row.iter().map(|&t| t.max(0.0)).collect();
        let sum: f64 = pos.iter().sum();
        for i in 0..n {
            p[(i, j)] = if sum > 0.0 {
                ds.p_total[j] * pos[i] / sum
            } else {
                ds.p_total[j] / n as f64
            };
        }
    }
    p
}

/// Mean normalized row over the experiments stressing unit `j`, stored as
/// column `j`.
pub fn stressed_means(ds: &SteadyStateDataset) -> Result<DMatrix<f64>> {
    let n = ds.n();
    let rows = ds.normalized_rows();
    let mut out = DMatrix::zeros(n, n);
    let mut counts = vec![0usize; n];
    for (r, &j) in rows.iter().zip(&stressed_units(&rows)) {
        counts[j] += 1;
        for i in 0..n {
            out[(i, j)] += r[i];
        }
    }
    if let Some(unit) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Validation(format!(
            "no single-core stress experiment found for unit {unit}"
        )));
    }
    for j in 0..n {
        let c = counts[j] as f64;
        for i in 0..n {
            out[(i, j)] /= c;
        }
    }
    Ok(out)
}

/// Column sums of a power matrix, for checking against the totals.
pub fn column_sums(p: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(p.ncols(), p.column_iter().map(|c| c.sum()))
}
