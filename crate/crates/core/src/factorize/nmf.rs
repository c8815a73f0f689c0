//! Nonnegative factorization `V ~ R P` of the transposed steady-state matrix
//! (`V = T_s^T`, units by experiments) with the power columns pinned to the
//! measured totals.
//!
//! Each iteration applies two majorize-minimize steps built on the Lee-Seung
//! auxiliary function, power first:
//!
//! * each column `p` of `P` moves to the minimizer of the separable quadratic
//!   majorizer restricted to `{p >= floor, sum(p) = total}`. Without the sum
//!   constraint that minimizer is the multiplicative update; with it, a scalar
//!   multiplier shifts every coordinate by `lambda / w_i`;
//! * `R <- R * (V P^T + d) / (R P P^T + d)`, the multiplicative update.
//!
//! Both steps minimize an upper bound that touches the objective at the
//! current point, so `||V - R P||_F` never increases and the column sums hold
//! exactly after every iteration.

use nalgebra::{DMatrix, DVector};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NmfConfig {
    pub max_iters: usize,
    /// Stop once the relative objective decrease of an iteration falls below this.
    pub tol: f64,
    /// Added to every update denominator; also the relative lower bound on
    /// power entries.
    pub epsilon_floor: f64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            max_iters: 5000,
            tol: 1e-9,
            epsilon_floor: 1e-12,
        }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Validation("max_iters must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Validation("tol must be positive".into()));
        }
        if !(self.epsilon_floor > 0.0 && self.epsilon_floor <= 1e-6) {
            return Err(Error::Validation(
                "epsilon_floor must lie in (0, 1e-6]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmfResult {
    pub r_hat: DMatrix<f64>,
    /// `N x M` estimated per-unit powers, one column per experiment.
    pub p_hat: DMatrix<f64>,
    /// `||V - R P||_F` at the initial point followed by one value per
    /// iteration.
    pub objective_curve: Vec<f64>,
    pub iterations_used: usize,
    /// Dataset rows (experiments) that entered the factorization.
    pub rows_used: Vec<usize>,
    pub warnings: Vec<String>,
}

impl NmfResult {
    pub fn final_objective(&self) -> f64 {
        *self.objective_curve.last().expect("curve starts with the initial objective")
    }
}

/// Replaces entries below `floor` with `floor`. Returns how many were clamped.
pub fn clamp_below(v: &mut DMatrix<f64>, floor: f64) -> usize {
    let mut count = 0;
    for x in v.iter_mut() {
        if !(*x >= floor) {
            *x = floor;
            count += 1;
        }
    }
    count
}

/// Makes a power initialization feasible: entries at least the floor and each
/// column summing to its total.
pub fn project_columns(p: &mut DMatrix<f64>, totals: &DVector<f64>, floor_rel: f64) {
    for j in 0..p.ncols() {
        let c = totals[j];
        let floor = floor_rel * c;
        let mut col = p.column_mut(j);
        if c == 0.0 {
            col.fill(0.0);
            continue;
        }
        for v in col.iter_mut() {
            if !(*v >= floor) {
                *v = floor;
            }
        }
        let sum: f64 = col.sum();
        let n = col.len() as f64;
        if sum <= 0.0 || !sum.is_finite() {
            col.fill(c / n);
        } else {
            // Scale the part above the floor so the column hits the total.
            let excess = sum - floor * n;
            let target = c - floor * n;
            if excess > 0.0 && target > 0.0 {
                for v in col.iter_mut() {
                    *v = floor + (*v - floor) * target / excess;
                }
            } else {
                col.fill(c / n);
            }
        }
        fix_sum(&mut p.column_mut(j), c);
    }
}

fn fix_sum(col: &mut nalgebra::DVectorViewMut<f64>, total: f64) {
    let drift = total - col.sum();
    let imax = col.imax();
    col[imax] += drift;
}

/// Frobenius residual `||V - R P||_F`.
pub fn residual_norm(v: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    (v - r * p).norm()
}

/// Runs the factorization from an explicit starting point.
///
/// `v` is `N x M`, `r0` is `N x N`, `p0` is `N x M`, `totals` has `M` entries.
/// Entries of `v` below the floor are clamped (with a warning); `p0` is
/// projected onto the feasible set before the first iteration.
pub fn nmf_from(
    v: &DMatrix<f64>,
    r0: &DMatrix<f64>,
    p0: &DMatrix<f64>,
    totals: &DVector<f64>,
    cfg: &NmfConfig,
) -> Result<NmfResult> {
    cfg.validate()?;
    let (n, m) = v.shape();
    if r0.shape() != (n, n) || p0.shape() != (n, m) || totals.len() != m {
        return Err(Error::Shape(format!(
            "factorization shapes disagree: V {n}x{m}, R0 {:?}, P0 {:?}, {} totals",
            r0.shape(),
            p0.shape(),
            totals.len()
        )));
    }
    let eps = cfg.epsilon_floor;
    let mut warnings = Vec::new();
    let mut v = v.clone();
    let clamped = clamp_below(&mut v, eps);
    if clamped > 0 {
        warnings.push(format!(
            "{clamped} non-positive steady-state rises clamped to {eps}"
        ));
    }
    let mut r = r0.map(|x| x.max(0.0));
    let mut p = p0.clone();
    project_columns(&mut p, totals, eps);

    let mut curve = Vec::with_capacity(cfg.max_iters.min(10_000) + 1);
    curve.push(residual_norm(&v, &r, &p));
    let mut iterations = 0;
    let mut lambda_scratch = Vec::with_capacity(n);
    for _ in 0..cfg.max_iters {
        let prev = *curve.last().unwrap();
        if prev == 0.0 {
            break;
        }

        // P step, one column at a time.
        let rtv = r.transpose() * &v;
        let rtr = r.transpose() * &r;
        let rtrp = &rtr * &p;
        for j in 0..m {
            let c = totals[j];
            if c == 0.0 {
                continue;
            }
            let floor = eps * c;
            lambda_scratch.clear();
            let mut col = p.column_mut(j);
            for i in 0..n {
                let pi = col[i];
                let w = (rtrp[(i, j)] + eps) / pi;
                let u = pi * (rtv[(i, j)] + eps) / (rtrp[(i, j)] + eps);
                lambda_scratch.push((u, w));
            }
            let lambda = sum_multiplier(&lambda_scratch, floor, c);
            for (i, &(u, w)) in lambda_scratch.iter().enumerate() {
                col[i] = (u - lambda / w).max(floor);
            }
            fix_sum(&mut col, c);
        }

        // R step.
        let num = &v * p.transpose();
        let ppt = &p * p.transpose();
        let den = &r * &ppt;
        for (rv, (nv, dv)) in r.iter_mut().zip(num.iter().zip(den.iter())) {
            *rv *= (nv + eps) / (dv + eps);
        }

        iterations += 1;
        let obj = residual_norm(&v, &r, &p);
        curve.push(obj);
        if prev - obj < cfg.tol * prev {
            break;
        }
    }
    Ok(NmfResult {
        r_hat: r,
        p_hat: p,
        objective_curve: curve,
        iterations_used: iterations,
        rows_used: (0..m).collect(),
        warnings,
    })
}

/// The multiplier `lambda` with `sum_i max(floor, u_i - lambda / w_i) = total`.
///
/// The sum is continuous, piecewise linear and nonincreasing in `lambda`, with
/// a kink where each coordinate reaches the floor, so the root is located by
/// walking the sorted kinks.
fn sum_multiplier(uw: &[(f64, f64)], floor: f64, total: f64) -> f64 {
    let n = uw.len() as f64;
    if total <= floor * n {
        return f64::INFINITY;
    }
    // Coordinate i sits on the floor once lambda >= (u_i - floor) w_i.
    let mut kinks: Vec<(f64, usize)> = uw
        .iter()
        .enumerate()
        .map(|(i, &(u, w))| ((u - floor) * w, i))
        .collect();
    kinks.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Below the smallest kink every coordinate is free:
    // sum(u) - lambda * sum(1/w) = total.
    let mut sum_u: f64 = uw.iter().map(|&(u, _)| u).sum();
    let mut sum_inv_w: f64 = uw.iter().map(|&(_, w)| 1.0 / w).sum();
    let mut floored = 0.0;
    for (idx, &(kink, i)) in kinks.iter().enumerate() {
        // Candidate root with the current free set.
        let lambda = (sum_u + floored - total) / sum_inv_w;
        let lower = if idx == 0 { f64::NEG_INFINITY } else { kinks[idx - 1].0 };
        if lambda <= kink && lambda >= lower {
            return lambda;
        }
        let (u, w) = uw[i];
        sum_u -= u;
        sum_inv_w -= 1.0 / w;
        floored += floor;
        if sum_inv_w <= 0.0 {
            break;
        }
    }
    // All coordinates floored except rounding leftovers; the caller's sum fix
    // absorbs the difference.
    kinks.last().map_or(0.0, |k| k.0)
}
