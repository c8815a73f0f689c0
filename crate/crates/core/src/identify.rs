//! Blind identification: the natural response from a cooling trace, the
//! resistance matrix from steady-state data, and per-sample power estimates.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factorize::{nmf_on_rows, nnls, simplex_ls, InitStrategy, NmfConfig, NmfResult, StrategyKind};
use crate::model::{PowerTrace, SteadyStateDataset, SystemModel, ThermalTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct AEstimate {
    pub a: DMatrix<f64>,
    /// `||T2 - A T1||_F / ||T2||_F`, zero when the trace has no rise at all.
    pub residual: f64,
    pub warnings: Vec<String>,
}

/// Row-wise nonnegative regression of `T(k)` on `T(k-1)` over a zero-power
/// trace.
pub fn estimate_a(cooling: &ThermalTrace) -> Result<AEstimate> {
    let rises = cooling.rises();
    let (k, n) = rises.shape();
    if k < 2 {
        return Err(Error::Validation("cooling trace needs at least two samples".into()));
    }
    // Samples as rows: T1 holds k = 0..K-2, T2 holds k = 1..K-1.
    let t1 = rises.rows(0, k - 1).into_owned();
    let t2 = rises.rows(1, k - 1).into_owned();
    let mut warnings = Vec::new();
    if k < n + 1 {
        warnings.push(format!(
            "cooling trace has {k} samples, fewer than the {} needed to pin down A",
            n + 1
        ));
    }
    let rank = t1.clone().svd(false, false).rank(1e-10 * t1.amax().max(f64::MIN_POSITIVE));
    if rank < n {
        warnings.push(format!(
            "cooling trace is rank deficient (rank {rank} of {n}); A is not identifiable"
        ));
    }
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n {
        let y: DVector<f64> = t2.column(i).into_owned();
        let row = nnls(&t1, &y)?;
        a.row_mut(i).copy_from(&row.transpose());
    }
    let denom = t2.norm();
    let residual = if denom > 0.0 {
        (&t2 - &t1 * a.transpose()).norm() / denom
    } else {
        0.0
    };
    Ok(AEstimate { a, residual, warnings })
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineResult {
    pub model: SystemModel,
    pub strategy: StrategyKind,
    pub nmf: NmfResult,
    pub a_residual: f64,
    pub warnings: Vec<String>,
}

/// Estimates `A` from the cooling trace, `R` by the initialized NMF, and sets
/// `B = (I - A) R`.
pub fn fit_offline(
    cooling: &ThermalTrace,
    ds: &SteadyStateDataset,
    strategy: StrategyKind,
    cfg: &NmfConfig,
) -> Result<OfflineResult> {
    let init = InitStrategy::prepare(strategy, ds)?;
    fit_offline_with(cooling, ds, &init, cfg)
}

/// [`fit_offline`] with an already prepared initialization.
pub fn fit_offline_with(
    cooling: &ThermalTrace,
    ds: &SteadyStateDataset,
    init: &InitStrategy,
    cfg: &NmfConfig,
) -> Result<OfflineResult> {
    fit_offline_on(cooling, ds, init, &init.training_rows(ds), cfg)
}

/// [`fit_offline_with`] factorizing only the experiments in `rows`.
pub fn fit_offline_on(
    cooling: &ThermalTrace,
    ds: &SteadyStateDataset,
    init: &InitStrategy,
    rows: &[usize],
    cfg: &NmfConfig,
) -> Result<OfflineResult> {
    if cooling.n() != ds.n() {
        return Err(Error::Shape(format!(
            "cooling trace has {} units but the steady-state dataset has {}",
            cooling.n(),
            ds.n()
        )));
    }
    let a_est = estimate_a(cooling)?;
    let fact = nmf_on_rows(ds, init, rows, cfg)?;
    let mut warnings = a_est.warnings;
    if let InitStrategy::DbscanIcbpi { hotspots } = init {
        warnings.extend(hotspots.warnings.iter().cloned());
    }
    warnings.extend(fact.warnings.iter().cloned());
    let model = SystemModel::from_a_r(a_est.a, fact.r_hat.clone())?;
    Ok(OfflineResult {
        model,
        strategy: init.kind(),
        nmf: fact,
        a_residual: a_est.residual,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerEstimate {
    /// Sample index of the first row; row `r` estimates sample `start + r`.
    pub start: usize,
    pub samples: DMatrix<f64>,
    pub per_sample_residual: DVector<f64>,
}

impl PowerEstimate {
    pub fn to_trace(&self) -> Result<PowerTrace> {
        PowerTrace::from_samples(self.samples.clone())
    }
}

/// Solves the simplex-constrained regression `B p ~ T(k) - A T(k-1)` for each
/// sample `k >= 1`. `totals` is indexed by sample, like the trace.
pub fn estimate_power(
    model: &SystemModel,
    trace: &ThermalTrace,
    totals: &DVector<f64>,
) -> Result<PowerEstimate> {
    let n = model.n();
    if trace.n() != n {
        return Err(Error::Shape(format!(
            "trace has {} units but the model has {n}",
            trace.n()
        )));
    }
    let k = trace.len();
    if totals.len() != k {
        return Err(Error::Shape(format!(
            "trace has {k} samples but {} power totals were given",
            totals.len()
        )));
    }
    if let Some(i) = totals.iter().position(|&p| !(p >= 0.0)) {
        return Err(Error::Validation(format!(
            "total power at sample {i} is negative ({})",
            totals[i]
        )));
    }
    let rises = trace.rises();
    let mut samples = DMatrix::zeros(k - 1, n);
    let mut resid = DVector::zeros(k - 1);
    for s in 1..k {
        let prev = rises.row(s - 1).transpose();
        let cur = rises.row(s).transpose();
        let y = cur - &model.a * prev;
        let p = simplex_ls(&model.b, &y, totals[s])?;
        resid[s - 1] = (&model.b * &p - &y).norm_squared();
        samples.row_mut(s - 1).copy_from(&p.transpose());
    }
    Ok(PowerEstimate {
        start: 1,
        samples,
        per_sample_residual: resid,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    /// Mean over units of the per-unit mean relative error, in percent.
    pub percent: f64,
    /// Compared entries skipped because the actual power was zero.
    pub excluded: usize,
}

/// Average absolute relative error between estimated and actual power, in
/// percent. Estimated row `r` is compared with actual sample `est.start + r`.
pub fn avg_abs_error(est: &PowerEstimate, truth: &PowerTrace) -> Result<ErrorSummary> {
    let actual = truth
        .samples
        .as_ref()
        .ok_or_else(|| Error::Validation("reference power trace has no per-unit samples".into()))?;
    let (rows, n) = est.samples.shape();
    if actual.ncols() != n || actual.nrows() < est.start + rows {
        return Err(Error::Shape(format!(
            "estimate covers samples {}..{} of {n} units, reference has {} samples of {} units",
            est.start,
            est.start + rows,
            actual.nrows(),
            actual.ncols()
        )));
    }
    let mut excluded = 0;
    let mut total = 0.0;
    let mut units = 0usize;
    for u in 0..n {
        let mut sum = 0.0;
        let mut count = 0usize;
        for r in 0..rows {
            let a = actual[(est.start + r, u)];
            if a > 0.0 {
                sum += (est.samples[(r, u)] - a).abs() / a;
                count += 1;
            } else {
                excluded += 1;
            }
        }
        if count > 0 {
            total += sum / count as f64;
            units += 1;
        }
    }
    if units == 0 {
        return Err(Error::Degenerate("no nonzero reference power to compare".into()));
    }
    Ok(ErrorSummary {
        percent: 100.0 * total / units as f64,
        excluded,
    })
}
