//! Constrained least-squares solvers and the initialized NMF engine.

pub mod init;
pub mod nmf;
pub mod qp;

pub use init::{init_bpi, init_bpiss, init_icbpi, InitStrategy, StrategyKind};
pub use nmf::{nmf_from, NmfConfig, NmfResult};
pub use qp::{nnls, simplex_ls};

use crate::error::{Error, Result};
use crate::model::SteadyStateDataset;

/// Factorizes `T_s^T ~ R P` from the given initialization.
///
/// The clustered strategy drops its outlier rows before iterating, so
/// `p_hat` has one column per entry of `rows_used`.
pub fn nmf(ds: &SteadyStateDataset, init: &InitStrategy, cfg: &NmfConfig) -> Result<NmfResult> {
    nmf_on_rows(ds, init, &init.training_rows(ds), cfg)
}

/// [`nmf`] restricted to the experiments listed in `rows`.
pub fn nmf_on_rows(
    ds: &SteadyStateDataset,
    init: &InitStrategy,
    rows: &[usize],
    cfg: &NmfConfig,
) -> Result<NmfResult> {
    cfg.validate()?;
    if rows.is_empty() {
        return Err(Error::Validation("no experiments selected for the factorization".into()));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= ds.experiments()) {
        return Err(Error::Shape(format!(
            "experiment {r} selected but the dataset has {}",
            ds.experiments()
        )));
    }
    let (r0, p0) = init.initial_factors(ds)?;
    let v = ds.t_s.select_rows(rows).transpose();
    let p0 = p0.select_columns(rows);
    let totals = ds.p_total.select_rows(rows);
    let mut res = nmf_from(&v, &r0, &p0, &totals, cfg)?;
    let dropped = ds.experiments() - rows.len();
    if dropped > 0 {
        res.warnings
            .push(format!("{dropped} experiments left out of the factorization"));
    }
    res.rows_used = rows.to_vec();
    Ok(res)
}
