//! Malicious thermal sensor detection and localization.
//!
//! A golden resistance matrix is fitted once from calibrated data. At runtime
//! the same pipeline is refitted; a relative deviation above `xi` raises an
//! alarm, the leave-one-out submatrix comparison names the suspect sensor, and
//! the suspect's temperature is rebuilt from the remaining sensors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::factorize::{simplex_ls, InitStrategy, NmfConfig, StrategyKind};
use crate::identify::{fit_offline, fit_offline_on, OfflineResult};
use crate::model::{SteadyStateDataset, SystemModel, ThermalTrace};
use crate::simkit::{inject_attack, inject_attack_steady, AttackScenario};

pub const DEFAULT_XI: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct GoldenReference {
    pub model: SystemModel,
    pub strategy: StrategyKind,
    pub cfg: NmfConfig,
    /// Calibration experiments the golden fit used; runtime refits use the
    /// same ones. `None` leaves the choice to the strategy.
    pub rows: Option<Vec<usize>>,
    pub warnings: Vec<String>,
}

impl GoldenReference {
    pub fn r_golden(&self) -> &DMatrix<f64> {
        &self.model.r
    }

    /// Wraps a known model, for example a ground-truth one.
    pub fn from_model(model: SystemModel, strategy: StrategyKind, cfg: NmfConfig) -> Self {
        GoldenReference {
            model,
            strategy,
            cfg,
            rows: None,
            warnings: Vec::new(),
        }
    }
}

/// Offline measurements the resistance matrix is fitted from, plus an optional
/// runtime workload used to rebuild a suspect sensor.
#[derive(Debug, Clone)]
pub struct SensorData {
    pub cooling: ThermalTrace,
    pub steady: SteadyStateDataset,
    pub workload: Option<(ThermalTrace, DVector<f64>)>,
}

impl SensorData {
    pub fn new(cooling: ThermalTrace, steady: SteadyStateDataset) -> Self {
        SensorData {
            cooling,
            steady,
            workload: None,
        }
    }

    pub fn with_workload(mut self, trace: ThermalTrace, totals: DVector<f64>) -> Self {
        self.workload = Some((trace, totals));
        self
    }

    /// The same data as read through one offset sensor.
    pub fn attacked(&self, sensor: usize, dt_error: f64) -> Result<SensorData> {
        let s = AttackScenario {
            sensor,
            dt_error,
            xi: DEFAULT_XI,
        };
        Ok(SensorData {
            cooling: inject_attack(&self.cooling, &s)?,
            steady: inject_attack_steady(&self.steady, &s)?,
            workload: match &self.workload {
                Some((t, p)) => Some((inject_attack(t, &s)?, p.clone())),
                None => None,
            },
        })
    }
}

/// Fits the golden model. When a previous golden reference is supplied and
/// the new fit deviates from it by more than the default tolerance, the data
/// were probably not clean and a warning is attached.
pub fn build_golden(
    data: &SensorData,
    strategy: StrategyKind,
    cfg: &NmfConfig,
    prior: Option<&GoldenReference>,
) -> Result<GoldenReference> {
    let fit = fit_offline(&data.cooling, &data.steady, strategy, cfg)?;
    let mut warnings = fit.warnings;
    if let Some(p) = prior {
        let dev = deviation(p.r_golden(), &fit.model.r)?;
        if dev > DEFAULT_XI {
            warnings.push(format!(
                "golden fit deviates {dev:.4} from the previous reference; calibration data may be compromised"
            ));
        }
    }
    Ok(GoldenReference {
        model: fit.model,
        strategy,
        cfg: *cfg,
        rows: Some(fit.nmf.rows_used),
        warnings,
    })
}

/// Runtime identification on the golden reference's calibration rows.
pub fn refit(golden: &GoldenReference, runtime: &SensorData) -> Result<OfflineResult> {
    let init = InitStrategy::prepare(golden.strategy, &runtime.steady)?;
    let rows = match &golden.rows {
        Some(r) => r.clone(),
        None => init.training_rows(&runtime.steady),
    };
    fit_offline_on(&runtime.cooling, &runtime.steady, &init, &rows, &golden.cfg)
}

/// `||R_rt - R_g||_F / ||R_g||_F`.
pub fn deviation(r_golden: &DMatrix<f64>, r_runtime: &DMatrix<f64>) -> Result<f64> {
    if r_golden.shape() != r_runtime.shape() {
        return Err(Error::Shape(format!(
            "golden R is {:?}, runtime R is {:?}",
            r_golden.shape(),
            r_runtime.shape()
        )));
    }
    let norm = r_golden.norm();
    if norm == 0.0 {
        return Err(Error::Degenerate("golden R is zero".into()));
    }
    Ok((r_runtime - r_golden).norm() / norm)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionReport {
    pub attacked: bool,
    pub deviation: f64,
    pub suspect: Option<usize>,
    /// Rebuilt suspect temperature (K) for samples `1..K` of the workload.
    pub t_hat: Option<DVector<f64>>,
    /// Leave-one-out residual of every unit; lowest marks the suspect.
    pub per_unit_scores: Vec<f64>,
    pub r_runtime: DMatrix<f64>,
}

/// Refits the resistance matrix on `runtime` and compares it with the golden
/// one.
pub fn detect(golden: &GoldenReference, runtime: &SensorData, xi: f64) -> Result<DetectionReport> {
    let fit = refit(golden, runtime)?;
    detect_with(golden, &fit.model.r, runtime, xi)
}

/// [`detect`] with an already fitted runtime resistance matrix.
pub fn detect_with(
    golden: &GoldenReference,
    r_runtime: &DMatrix<f64>,
    runtime: &SensorData,
    xi: f64,
) -> Result<DetectionReport> {
    if xi.is_nan() || xi < 0.0 {
        return Err(Error::Validation(format!("tolerance must be nonnegative, got {xi}")));
    }
    let dev = deviation(golden.r_golden(), r_runtime)?;
    let attacked = dev > xi;
    let (suspect, scores) = if golden.model.n() > 1 {
        let (s, scores) = identify_suspect(golden.r_golden(), r_runtime)?;
        (attacked.then_some(s), scores)
    } else {
        (None, Vec::new())
    };
    let t_hat = match (suspect, &runtime.workload) {
        (Some(s), Some((trace, totals))) => Some(estimate_true_temp(golden, trace, totals, s)?),
        _ => None,
    };
    Ok(DetectionReport {
        attacked,
        deviation: dev,
        suspect,
        t_hat,
        per_unit_scores: scores,
        r_runtime: r_runtime.clone(),
    })
}

/// Removes row and column `i`.
fn without(m: &DMatrix<f64>, i: usize) -> DMatrix<f64> {
    m.clone().remove_row(i).remove_column(i)
}

/// The unit whose exclusion best restores agreement between the runtime and
/// golden matrices, with every unit's leave-one-out score. Ties go to the
/// lowest index.
pub fn identify_suspect(
    r_golden: &DMatrix<f64>,
    r_runtime: &DMatrix<f64>,
) -> Result<(usize, Vec<f64>)> {
    let n = r_golden.nrows();
    if n < 2 {
        return Err(Error::Degenerate(
            "cannot compare submatrices of a single-unit model".into(),
        ));
    }
    deviation(r_golden, r_runtime)?;
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let g = without(r_golden, i);
            let r = without(r_runtime, i);
            let norm = g.norm();
            if norm > 0.0 {
                (r - &g).norm() / norm
            } else {
                (r - &g).norm()
            }
        })
        .collect();
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

/// Rebuilds the suspect sensor from the others. Power is re-estimated with the
/// suspect's row of the model left out, then the suspect's own state equation
/// is stepped forward with the golden rows. The returned series covers
/// samples `1..K`.
pub fn estimate_true_temp(
    golden: &GoldenReference,
    trace: &ThermalTrace,
    totals: &DVector<f64>,
    suspect: usize,
) -> Result<DVector<f64>> {
    let m = &golden.model;
    let n = m.n();
    if n < 2 {
        return Err(Error::Degenerate(
            "cannot exclude the only sensor of a single-unit model".into(),
        ));
    }
    if suspect >= n {
        return Err(Error::Validation(format!("suspect {suspect} outside 0..{n}")));
    }
    if trace.n() != n {
        return Err(Error::Shape(format!(
            "trace has {} units, golden model has {n}",
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
    let keep: Vec<usize> = (0..n).filter(|&i| i != suspect).collect();
    let b_red = m.b.select_rows(&keep);
    let a_red = m.a.select_rows(&keep);
    let rises = trace.rises();

    let mut state: DVector<f64> = rises.row(0).transpose();
    let mut out = DVector::zeros(k - 1);
    for s in 1..k {
        let cur: DVector<f64> = rises.row(s).transpose();
        let y = cur.select_rows(&keep) - &a_red * &state;
        let p = simplex_ls(&b_red, &y, totals[s])?;
        if s == 1 {
            // The suspect's initial reading is untrusted; start it from the
            // steady state of the first estimated power.
            state[suspect] = (m.r.row(suspect) * &p)[0];
        }
        let t_s = (m.a.row(suspect) * &state)[0] + (m.b.row(suspect) * &p)[0];
        state = cur;
        state[suspect] = t_s;
        out[s - 1] = t_s + trace.ambient;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub xi: f64,
    pub dt_error: f64,
    pub detection_failures: usize,
    pub identification_failures: usize,
    pub trials: usize,
    /// `dt_error == 0`: nothing to detect, reported as a control.
    pub benign: bool,
}

/// Outcome of attacking one sensor by one offset.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub dt_error: f64,
    pub sensor: usize,
    /// Infinite when the attacked data could not be fitted.
    pub deviation: f64,
    pub suspect: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub strategy: StrategyKind,
    pub xi_grid: Vec<f64>,
    pub dt_grid: Vec<f64>,
    pub trials: Vec<Trial>,
    /// Ordered by offset, then tolerance.
    pub cells: Vec<SweepCell>,
}

/// The tolerance grid `0.01, 0.02, ..., 0.10`.
pub fn default_xi_grid() -> Vec<f64> {
    (1..=10).map(|i| i as f64 / 100.0).collect()
}

/// The offsets `-15..=-1` and `1..=15` in 1 K steps.
pub fn default_dt_grid() -> Vec<f64> {
    (-15..=15).filter(|&d| d != 0).map(|d| d as f64).collect()
}

/// Attacks every sensor with every offset, refits once per attack and scores
/// the result against every tolerance.
pub fn sweep(
    golden: &GoldenReference,
    clean: &SensorData,
    xi_grid: &[f64],
    dt_grid: &[f64],
) -> Result<SweepReport> {
    if xi_grid.is_empty() || dt_grid.is_empty() {
        return Err(Error::Usage("sweep grids must be nonempty".into()));
    }
    let n = golden.model.n();
    if n < 2 {
        return Err(Error::Degenerate("sweep needs at least two sensors".into()));
    }
    let mut trials = Vec::with_capacity(dt_grid.len() * n);
    for &dt in dt_grid {
        for sensor in 0..n {
            let data = clean.attacked(sensor, dt)?;
            // Attacked data the pipeline cannot fit at all raise the alarm
            // without naming anyone.
            let (dev, suspect) =
                match refit(golden, &data) {
                    Ok(fit) => (
                        deviation(golden.r_golden(), &fit.model.r)?,
                        Some(identify_suspect(golden.r_golden(), &fit.model.r)?.0),
                    ),
                    Err(Error::Validation(_) | Error::Degenerate(_)) => (f64::INFINITY, None),
                    Err(e) => return Err(e),
                };
            trials.push(Trial {
                dt_error: dt,
                sensor,
                deviation: dev,
                suspect,
            });
        }
    }
    let mut cells = Vec::with_capacity(dt_grid.len() * xi_grid.len());
    for (d, &dt) in dt_grid.iter().enumerate() {
        let row = &trials[d * n..(d + 1) * n];
        for &xi in xi_grid {
            let mut det = 0;
            let mut ident = 0;
            for t in row {
                if t.deviation > xi {
                    if t.suspect != Some(t.sensor) {
                        ident += 1;
                    }
                } else {
                    det += 1;
                }
            }
            cells.push(SweepCell {
                xi,
                dt_error: dt,
                detection_failures: det,
                identification_failures: ident,
                trials: n,
                benign: dt == 0.0,
            });
        }
    }
    Ok(SweepReport {
        strategy: golden.strategy,
        xi_grid: xi_grid.to_vec(),
        dt_grid: dt_grid.to_vec(),
        trials,
        cells,
    })
}

/// Failure rates for one offset, pooled over every tolerance and sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateRow {
    pub dt_error: f64,
    pub detection_rate: f64,
    pub identification_rate: f64,
}

impl SweepReport {
    pub fn rates(&self) -> Vec<RateRow> {
        self.dt_grid
            .iter()
            .map(|&dt| {
                let cells: Vec<&SweepCell> =
                    self.cells.iter().filter(|c| c.dt_error == dt).collect();
                let trials: usize = cells.iter().map(|c| c.trials).sum();
                let det: usize = cells.iter().map(|c| c.detection_failures).sum();
                let ident: usize = cells.iter().map(|c| c.identification_failures).sum();
                RateRow {
                    dt_error: dt,
                    detection_rate: 100.0 * det as f64 / trials as f64,
                    identification_rate: 100.0 * ident as f64 / trials as f64,
                }
            })
            .collect()
    }

    /// Detection plus identification failures over non-benign cells whose
    /// offset magnitude lies in `[lo, hi]`.
    pub fn failures_in_band(&self, lo: f64, hi: f64) -> usize {
        self.cells
            .iter()
            .filter(|c| !c.benign && c.dt_error.abs() >= lo && c.dt_error.abs() <= hi)
            .map(|c| c.detection_failures + c.identification_failures)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(n: usize, diag: f64, off: f64) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |i, j| if i == j { diag } else { off })
    }

    #[test]
    fn suspect_is_the_perturbed_unit() {
        let g = sym(4, 1.0, 0.2);
        let mut r = g.clone();
        for j in 0..4 {
            r[(2, j)] += 0.3;
            r[(j, 2)] += 0.3;
        }
        let (s, scores) = identify_suspect(&g, &r).unwrap();
        assert_eq!(s, 2);
        assert!(scores[2] < 1e-15);
    }

    #[test]
    fn tie_goes_to_lowest_index() {
        let g = sym(4, 1.0, 0.2);
        let mut r = g.clone();
        r[(1, 3)] += 0.5;
        r[(3, 1)] += 0.5;
        let (s, scores) = identify_suspect(&g, &r).unwrap();
        assert_eq!(scores[1], scores[3]);
        assert_eq!(s, 1);
    }

    #[test]
    fn single_unit_cannot_be_reconstructed() {
        let m = SystemModel::from_a_r(
            DMatrix::from_element(1, 1, 0.5),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let g = GoldenReference::from_model(m, StrategyKind::DbscanIcbpi, NmfConfig::default());
        let t = ThermalTrace::new(0.1, 300.0, DMatrix::from_element(3, 1, 301.0)).unwrap();
        assert!(estimate_true_temp(&g, &t, &DVector::from_element(3, 1.0), 0).is_err());
    }

    #[test]
    fn default_grids() {
        assert_eq!(default_xi_grid().len(), 10);
        assert_eq!(default_dt_grid().len(), 30);
        assert!(!default_dt_grid().contains(&0.0));
    }
}
