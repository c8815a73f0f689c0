//! Reference implementations the library is checked against. They favor
//! obviousness over speed.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ls_objective(m: &DMatrix<f64>, y: &DVector<f64>, x: &DVector<f64>) -> f64 {
    (m * x - y).norm_squared()
}

/// Minimum of `||m x - y||^2` over `x >= 0` by trying every support set and
/// keeping the feasible unconstrained solutions.
pub fn nnls_by_enumeration(m: &DMatrix<f64>, y: &DVector<f64>) -> f64 {
    let n = m.ncols();
    let mut best = y.norm_squared();
    for mask in 1u32..(1 << n) {
        let cols: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let sub = m.select_columns(&cols);
        let normal = sub.transpose() * &sub;
        let Some(z) = normal.lu().solve(&(sub.transpose() * y)) else {
            continue;
        };
        if z.iter().any(|&v| v < 0.0) {
            continue;
        }
        let mut x = DVector::zeros(n);
        for (k, &j) in cols.iter().enumerate() {
            x[j] = z[k];
        }
        best = best.min(ls_objective(m, y, &x));
    }
    best
}

/// Minimum of `||m x - y||^2` over the 3-variable simplex `sum x = total`,
/// sampled on a grid with spacing `step * total`.
pub fn simplex_grid_min(m: &DMatrix<f64>, y: &DVector<f64>, total: f64, step: f64) -> f64 {
    assert_eq!(m.ncols(), 3);
    let cells = (1.0 / step).round() as usize;
    let mut best = f64::INFINITY;
    let mut x = DVector::zeros(3);
    for a in 0..=cells {
        for b in 0..=(cells - a) {
            x[0] = total * a as f64 / cells as f64;
            x[1] = total * b as f64 / cells as f64;
            x[2] = total * (cells - a - b) as f64 / cells as f64;
            best = best.min(ls_objective(m, y, &x));
        }
    }
    best
}

/// Plain DBSCAN from the definitions: core points have at least `min_pts`
/// points (themselves included) within `eps`; clusters are the connected
/// components of core points; a border point may join any cluster owning a
/// core point within `eps`.
pub struct DbscanReference {
    pub core: Vec<bool>,
    /// Component id of each core point.
    pub component: Vec<Option<usize>>,
    /// Components a border point may belong to; empty for noise.
    pub allowed: Vec<Vec<usize>>,
}

pub fn dbscan_reference(points: &[Vec<f64>], eps: f64, min_pts: usize) -> DbscanReference {
    let n = points.len();
    let dist = |i: usize, j: usize| -> f64 {
        points[i]
            .iter()
            .zip(&points[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| dist(i, j) <= eps).count() >= min_pts)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if core[i] && core[j] && dist(i, j) <= eps {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut ids = BTreeMap::new();
    let mut component = vec![None; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = ids.len();
            component[i] = Some(*ids.entry(root).or_insert(next));
        }
    }
    let allowed = (0..n)
        .map(|i| {
            if let Some(c) = component[i] {
                return vec![c];
            }
            let mut cs: Vec<usize> = (0..n)
                .filter(|&j| core[j] && dist(i, j) <= eps)
                .filter_map(|j| component[j])
                .collect();
            cs.sort_unstable();
            cs.dedup();
            cs
        })
        .collect();
    DbscanReference {
        core,
        component,
        allowed,
    }
}

/// Checks labels (`None` for noise) against the reference up to a relabeling
/// of clusters. Returns a description of the first mismatch.
pub fn compare_with_reference(
    labels: &[Option<usize>],
    reference: &DbscanReference,
) -> Result<(), String> {
    let mut to_ref: BTreeMap<usize, usize> = BTreeMap::new();
    let mut from_ref: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, comp) in reference.component.iter().enumerate() {
        let Some(c) = comp else { continue };
        let Some(l) = labels[i] else {
            return Err(format!("core point {i} labelled noise"));
        };
        if *to_ref.entry(l).or_insert(*c) != *c || *from_ref.entry(*c).or_insert(l) != l {
            return Err(format!("core point {i}: cluster {l} does not match component {c}"));
        }
    }
    for (i, allowed) in reference.allowed.iter().enumerate() {
        if reference.core[i] {
            continue;
        }
        match labels[i] {
            None if allowed.is_empty() => {}
            None => return Err(format!("border point {i} labelled noise")),
            Some(l) => match to_ref.get(&l) {
                Some(c) if allowed.contains(c) => {}
                _ => return Err(format!("point {i} in cluster {l}, allowed {allowed:?}")),
            },
        }
    }
    if to_ref.len() != reference.component.iter().flatten().max().map_or(0, |m| m + 1) {
        return Err("cluster counts differ".into());
    }
    Ok(())
}

/// `k`-th nearest other-point distance of every point, sorted descending.
pub fn k_distances(points: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut d: Vec<f64> = points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| p.iter().zip(q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .collect();
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            d[k - 1]
        })
        .collect();
    out.sort_by(|a, b| b.partial_cmp(a).unwrap());
    out
}

/// Largest distance from the line through the first and last curve points,
/// measured as the area of the triangle each point spans with them.
pub fn elbow_by_area(curve: &[f64]) -> usize {
    let n = curve.len();
    let (x1, y1) = ((n - 1) as f64, curve[n - 1]);
    let y0 = curve[0];
    let mut best = (0, -1.0);
    for (i, &y) in curve.iter().enumerate() {
        let area = ((x1 - 0.0) * (y - y0) - (i as f64 - 0.0) * (y1 - y0)).abs();
        if area > best.1 {
            best = (i, area);
        }
    }
    best.0
}

/// Gaussian blobs plus uniform background points in the unit square.
pub fn blobs(rng: &mut ChaCha8Rng, max_points: usize) -> Vec<Vec<f64>> {
    let total = rng.gen_range(20..=max_points);
    let centers: Vec<(f64, f64)> = (0..rng.gen_range(1..=4))
        .map(|_| (rng.gen_range(0.1..0.9), rng.gen_range(0.1..0.9)))
        .collect();
    let background = total / 10;
    (0..total)
        .map(|i| {
            if i < background {
                vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]
            } else {
                let (cx, cy) = centers[i % centers.len()];
                let s = 0.04;
                vec![cx + s * normal(rng), cy + s * normal(rng)]
            }
        })
        .collect()
}

/// Standard normal draw by Box-Muller.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = rng.gen_range(f64::EPSILON..1.0);
    let v: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(lo..hi))
}

/// Every regular file under `dir`, keyed by its path relative to `dir`.
pub fn files_under(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

/// Runs the command line in-process and returns its exit code.
pub fn bpilab(args: &[&str]) -> i32 {
    let mut full = vec!["bpilab"];
    full.extend_from_slice(args);
    bpilab::cli::main_with_args(full)
}

/// Like [`bpilab`] but discards the command's progress lines.
pub fn bpilab_quiet(args: &[&str]) -> i32 {
    use clap::Parser;
    let mut full = vec!["bpilab"];
    full.extend_from_slice(args);
    match bpilab::cli::Cli::try_parse_from(full) {
        Err(e) => i32::from(e.use_stderr()),
        Ok(cli) => match bpilab::cli::run(&cli) {
            Ok(_) => 0,
            Err(e) => e.exit_code(),
        },
    }
}
