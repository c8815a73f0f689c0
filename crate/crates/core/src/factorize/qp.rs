//! Small dense least-squares problems with nonnegativity, and optionally a
//! fixed sum, solved by a primal active-set method.
//!
//! Without the sum constraint this is Lawson-Hanson NNLS: start at zero with
//! every bound active and free the variable with the most negative multiplier.
//! With the sum constraint the iterate starts at the simplex barycenter and the
//! equality is carried in every subproblem through a null-space basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `x >= 0` minimizing `||m x - y||^2`.
pub fn nnls(m: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_dims(m, y)?;
    Ok(active_set(m, y, None))
}

/// `x >= 0` with `sum(x) = total` minimizing `||m x - y||^2`.
pub fn simplex_ls(m: &DMatrix<f64>, y: &DVector<f64>, total: f64) -> Result<DVector<f64>> {
    check_dims(m, y)?;
    if !(total >= 0.0) || !total.is_finite() {
        return Err(Error::Validation(format!(
            "simplex total must be nonnegative, got {total}"
        )));
    }
    if m.ncols() == 0 {
        return Err(Error::Shape("simplex problem with no variables".into()));
    }
    Ok(active_set(m, y, Some(total)))
}

fn check_dims(m: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if m.nrows() != y.len() {
        return Err(Error::Shape(format!(
            "matrix has {} rows but right-hand side has {}",
            m.nrows(),
            y.len()
        )));
    }
    Ok(())
}

/// Least-squares objective `||m x - y||^2`.
pub fn objective(m: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (m * x - y).norm_squared()
}

/// Minimum-norm least-squares solution of `a z = b`.
fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    if a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = smax * 1e-13 * a.nrows().max(a.ncols()) as f64;
    svd.solve(b, cutoff.max(f64::MIN_POSITIVE))
        .unwrap_or_else(|_| DVector::zeros(a.ncols()))
}

/// Solves the subproblem on the free set: unconstrained least squares, or
/// least squares on the hyperplane `sum = total`.
fn subproblem(m: &DMatrix<f64>, y: &DVector<f64>, free: &[usize], total: Option<f64>) -> DVector<f64> {
    let mf = m.select_columns(free);
    match total {
        None => lstsq(&mf, y),
        Some(s) => {
            let f = free.len();
            let base = s / f as f64;
            if f == 1 {
                return DVector::from_element(1, s);
            }
            // x = base * 1 + Z w with Z = [I; -1^T], which spans {v : sum(v) = 0}.
            let mut z = DMatrix::zeros(f, f - 1);
            for c in 0..f - 1 {
                z[(c, c)] = 1.0;
                z[(f - 1, c)] = -1.0;
            }
            let rhs = y - &mf * DVector::from_element(f, base);
            let w = lstsq(&(&mf * &z), &rhs);
            let mut x = DVector::from_element(f, base) + z * w;
            // Put the rounding residue of the sum on the largest entry.
            let drift = s - x.sum();
            let imax = x.imax();
            x[imax] += drift;
            x
        }
    }
}

fn active_set(m: &DMatrix<f64>, y: &DVector<f64>, total: Option<f64>) -> DVector<f64> {
    let n = m.ncols();
    let h = m.transpose() * m;
    let g = m.transpose() * y;
    let scale = g
        .amax()
        .max(h.amax() * total.unwrap_or(0.0))
        .max(f64::MIN_POSITIVE);
    let tol = 1e-11 * scale;

    let (mut x, mut free) = match total {
        None => (DVector::zeros(n), vec![false; n]),
        Some(0.0) => return DVector::zeros(n),
        Some(s) => (DVector::from_element(n, s / n as f64), vec![true; n]),
    };
    if total.is_some() {
        descend(m, y, total, &mut x, &mut free, None);
    }

    // Bounds whose release failed to move the iterate; cleared when x moves.
    let mut stuck = vec![false; n];
    for _ in 0..(3 * n + 50) {
        let grad = &h * &x - &g;
        let free_idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let nu = match total {
            Some(_) if !free_idx.is_empty() => {
                -free_idx.iter().map(|&i| grad[i]).sum::<f64>() / free_idx.len() as f64
            }
            _ => 0.0,
        };
        let candidate = (0..n)
            .filter(|&i| !free[i] && !stuck[i])
            .map(|i| (i, grad[i] + nu))
            .filter(|&(_, lambda)| lambda < -tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        let Some((j, _)) = candidate else { break };
        free[j] = true;
        if descend(m, y, total, &mut x, &mut free, Some(j)) {
            stuck.fill(false);
        } else {
            stuck[j] = true;
        }
    }
    if let Some(s) = total {
        renormalize(&mut x, s);
    }
    x
}

/// Moves `x` toward the optimum over the free set, making blocking variables
/// active, until the free-set optimum is strictly feasible. Returns false when
/// `released` could not enter the free set.
fn descend(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    total: Option<f64>,
    x: &mut DVector<f64>,
    free: &mut [bool],
    released: Option<usize>,
) -> bool {
    let n = x.len();
    let mut first = true;
    for _ in 0..=n {
        let idx: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        if idx.is_empty() {
            return true;
        }
        let z = subproblem(m, y, &idx, total);
        if z.iter().all(|&v| v > 0.0) {
            x.fill(0.0);
            for (k, &i) in idx.iter().enumerate() {
                x[i] = z[k];
            }
            return true;
        }
        if first {
            if let Some(j) = released {
                let pos = idx.iter().position(|&i| i == j).expect("released is free");
                if z[pos] <= 0.0 {
                    free[j] = false;
                    return false;
                }
            }
        }
        first = false;
        let mut alpha = 1.0_f64;
        let mut blocker = None;
        for (k, &i) in idx.iter().enumerate() {
            if z[k] <= 0.0 {
                let denom = x[i] - z[k];
                let ratio = if denom > 0.0 { x[i] / denom } else { 0.0 };
                if ratio < alpha || blocker.is_none() {
                    alpha = alpha.min(ratio);
                    blocker = Some(i);
                }
            }
        }
        for (k, &i) in idx.iter().enumerate() {
            x[i] += alpha * (z[k] - x[i]);
        }
        if let Some(b) = blocker {
            x[b] = 0.0;
            free[b] = false;
        }
        for &i in &idx {
            if x[i] <= 0.0 {
                x[i] = 0.0;
                free[i] = false;
            }
        }
        if let Some(s) = total {
            renormalize(x, s);
        }
    }
    true
}

/// Clamps negatives created by rounding and restores the exact sum.
fn renormalize(x: &mut DVector<f64>, s: f64) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum = x.sum();
    if sum > 0.0 {
        let drift = s - sum;
        let imax = x.imax();
        x[imax] += drift;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamped_identity() {
        let m = DMatrix::identity(2, 2);
        let x = nnls(&m, &DVector::from_vec(vec![3.0, -1.0])).unwrap();
        assert_eq!(x, DVector::from_vec(vec![3.0, 0.0]));
    }

    #[test]
    fn identity_with_nonnegative_rhs_returns_rhs() {
        let m = DMatrix::identity(4, 4);
        let y = DVector::from_vec(vec![0.5, 2.0, 0.0, 7.25]);
        let x = nnls(&m, &y).unwrap();
        assert!((x - y).amax() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero() {
        let x = nnls(&DMatrix::zeros(3, 2), &DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(x, DVector::zeros(2));
    }

    #[test]
    fn single_variable_simplex_is_pinned() {
        let m = DMatrix::from_row_slice(2, 1, &[3.0, -1.0]);
        let x = simplex_ls(&m, &DVector::from_vec(vec![100.0, 5.0]), 4.5).unwrap();
        assert_eq!(x[0], 4.5);
    }

    #[test]
    fn symmetric_simplex() {
        let x = simplex_ls(&DMatrix::identity(2, 2), &DVector::from_vec(vec![1.0, 1.0]), 2.0).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn negative_total_is_rejected() {
        assert!(simplex_ls(&DMatrix::identity(2, 2), &DVector::zeros(2), -1.0).is_err());
    }

    #[test]
    fn simplex_with_zero_total_is_zero() {
        let x = simplex_ls(&DMatrix::identity(3, 3), &DVector::from_element(3, 1.0), 0.0).unwrap();
        assert_eq!(x, DVector::zeros(3));
    }

    #[test]
    fn simplex_pushes_mass_to_a_vertex_when_needed() {
        // Target far along the first axis: the optimum is the vertex (s, 0, 0).
        let m = DMatrix::identity(3, 3);
        let x = simplex_ls(&m, &DVector::from_vec(vec![10.0, -3.0, -3.0]), 1.0).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_a_shape_error() {
        assert!(matches!(
            nnls(&DMatrix::zeros(3, 2), &DVector::zeros(2)),
            Err(Error::Shape(_))
        ));
    }
}
