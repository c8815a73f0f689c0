//! Density-based clustering of steady-state thermal rows.
//!
//! A point is a *core* point when its closed `eps`-ball holds at least
//! `min_pts` points, itself included. Clusters grow from core points through
//! chains of directly reachable neighbors; points reachable from no core point
//! are noise. The radius is picked from the elbow of the k-distance curve.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::SteadyStateDataset;

/// Straight-line distance.
pub fn euclidean(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    p.iter()
        .zip(q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Validation(format!("eps must be positive, got {eps}")));
        }
        if min_pts < 2 {
            return Err(Error::Validation(format!(
                "min_pts must be at least 2, got {min_pts}"
            )));
        }
        Ok(DbscanParams { eps, min_pts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Cluster(usize),
    Noise,
}

impl Label {
    pub fn cluster(self) -> Option<usize> {
        match self {
            Label::Cluster(c) => Some(c),
            Label::Noise => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub labels: Vec<Label>,
    pub centroids: Vec<Vec<f64>>,
    pub core_flags: Vec<bool>,
}

impl ClusterResult {
    pub fn cluster_count(&self) -> usize {
        self.centroids.len()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Cluster(cluster))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn noise(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| **l == Label::Noise)
            .map(|(i, _)| i)
            .collect()
    }
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclidean(&points[i], &points[j]);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// The sorted k-distance curve and the radius read off its elbow.
#[derive(Debug, Clone, PartialEq)]
pub struct KDistance {
    pub eps: f64,
    /// Distances in descending order.
    pub curve: Vec<f64>,
    pub elbow_index: usize,
}

/// Distance from each point to its `k`-th nearest other point, sorted in
/// descending order. The elbow is the curve
/// point farthest from the chord between the first and last points; ties go
/// to the lowest index.
pub fn k_distance_eps(points: &[Vec<f64>], k: usize) -> Result<KDistance> {
    let curve = k_distance_curve(points, k)?;
    let elbow_index = chord_elbow(&curve);
    Ok(KDistance {
        eps: curve[elbow_index],
        curve,
        elbow_index,
    })
}

/// Like [`k_distance_eps`], with the elbow taken on the logarithm of the
/// curve so that a few far outliers at its head do not flatten the rest.
pub fn k_distance_eps_log(points: &[Vec<f64>], k: usize) -> Result<KDistance> {
    let curve = k_distance_curve(points, k)?;
    let elbow_index = log_chord_elbow(&curve);
    Ok(KDistance {
        eps: curve[elbow_index],
        curve,
        elbow_index,
    })
}

fn k_distance_curve(points: &[Vec<f64>], k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::Validation("k must be positive".into()));
    }
    if points.len() <= k {
        return Err(Error::Shape(format!(
            "k-distance with k = {k} needs more than {k} points, got {}",
            points.len()
        )));
    }
    let d = distance_matrix(points);
    let mut curve: Vec<f64> = d
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(f64::total_cmp);
            // r[0] is the point itself.
            r[k]
        })
        .collect();
    curve.sort_by(|a, b| b.total_cmp(a));
    Ok(curve)
}

/// [`chord_elbow`] on `ln(d)`, with zero distances raised to `1e-12` of the
/// largest one.
pub fn log_chord_elbow(curve: &[f64]) -> usize {
    let top = curve.iter().fold(0.0_f64, |a, &v| a.max(v));
    if top <= 0.0 {
        return 0;
    }
    let floor = top * 1e-12;
    let logs: Vec<f64> = curve.iter().map(|&d| d.max(floor).ln()).collect();
    chord_elbow(&logs)
}

/// Index of maximum perpendicular distance from the chord joining the first
/// and last curve points, with x the index.
pub fn chord_elbow(curve: &[f64]) -> usize {
    let n = curve.len();
    if n < 3 {
        return 0;
    }
    let (x0, y0) = (0.0, curve[0]);
    let (x1, y1) = ((n - 1) as f64, curve[n - 1]);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = (dx * dx + dy * dy).sqrt();
    let mut best = 0;
    let mut best_d = f64::NEG_INFINITY;
    for (i, &y) in curve.iter().enumerate() {
        let dist = (dy * (i as f64 - x0) - dx * (y - y0)).abs() / norm;
        if dist > best_d {
            best_d = dist;
            best = i;
        }
    }
    best
}

/// Clusters `points`. Seeds are taken in ascending index order and each
/// cluster is expanded breadth-first, so the output depends only on the input
/// order.
pub fn dbscan(points: &[Vec<f64>], params: DbscanParams) -> ClusterResult {
    let n = points.len();
    let d = distance_matrix(points);
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| d[i][j] <= params.eps).collect())
        .collect();
    let core_flags: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    let mut labels: Vec<Option<Label>> = vec![None; n];
    let mut clusters = 0;
    for seed in 0..n {
        if labels[seed].is_some() || !core_flags[seed] {
            continue;
        }
        let id = clusters;
        clusters += 1;
        labels[seed] = Some(Label::Cluster(id));
        let mut queue = std::collections::VecDeque::from([seed]);
        while let Some(p) = queue.pop_front() {
            if !core_flags[p] {
                continue;
            }
            for &q in &neighbors[p] {
                if labels[q].is_none() {
                    labels[q] = Some(Label::Cluster(id));
                    queue.push_back(q);
                }
            }
        }
    }
    let labels: Vec<Label> = labels.into_iter().map(|l| l.unwrap_or(Label::Noise)).collect();
    let centroids = centroids_of(points, &labels, clusters);
    ClusterResult {
        labels,
        centroids,
        core_flags,
    }
}

fn centroids_of(points: &[Vec<f64>], labels: &[Label], clusters: usize) -> Vec<Vec<f64>> {
    let dim = points.first().map_or(0, |p| p.len());
    let mut sums = vec![vec![0.0; dim]; clusters];
    let mut counts = vec![0usize; clusters];
    for (p, l) in points.iter().zip(labels) {
        if let Label::Cluster(c) = l {
            counts[*c] += 1;
            for (s, v) in sums[*c].iter_mut().zip(p) {
                *s += v;
            }
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

/// Smallest radius handed to DBSCAN when the elbow lands on a zero distance
/// (coincident points), relative to the data scale.
const EPS_FLOOR_REL: f64 = 1e-9;

/// Per-unit hotspot signatures extracted from a steady-state dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Hotspots {
    /// Row `i` is the centroid (K/W) of the cluster assigned to unit `i`.
    pub centroids: DMatrix<f64>,
    pub clustering: ClusterResult,
    pub k_distance: KDistance,
    pub params: DbscanParams,
    /// Unit owning each cluster, by cluster id.
    pub cluster_unit: Vec<Option<usize>>,
    /// Units whose row came from a fallback rather than a cluster.
    pub fallback_units: Vec<usize>,
    /// Rows that are noise even at the linear k-distance elbow radius.
    pub outliers: Vec<usize>,
    pub warnings: Vec<String>,
}

/// Clusters the power-normalized steady-state rows with `MinPts = N + 1` and
/// a radius from the log k-distance elbow, then maps each cluster to the unit with the largest
/// centroid coordinate (ties to the lowest index), falling back to a
/// one-to-one assignment when two clusters claim the same unit. A unit without
/// a cluster gets the mean of the rows stressing it; if there are none the row
/// is a scaled unit vector and a degraded-init warning is recorded.
pub fn hotspot_centroids(ds: &SteadyStateDataset) -> Result<Hotspots> {
    let n = ds.n();
    let points = ds.normalized_rows();
    let min_pts = n + 1;
    // A neighborhood of MinPts points includes the point itself.
    let kd = k_distance_eps_log(&points, min_pts - 1)?;
    let scale = points
        .iter()
        .flat_map(|p| p.iter())
        .fold(0.0_f64, |a, v| a.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let eps = kd.eps.max(EPS_FLOOR_REL * scale);
    let params = DbscanParams::new(eps, min_pts)?;
    let clustering = dbscan(&points, params);
    // Outliers are rows that stay noise at the coarser linear-elbow radius.
    let coarse = k_distance_eps(&points, min_pts - 1)?.eps.max(eps);
    let outliers = if coarse > eps {
        dbscan(&points, DbscanParams::new(coarse, min_pts)?).noise()
    } else {
        clustering.noise()
    };

    let cluster_unit = assign_clusters(&clustering.centroids, n);
    let stressed = stressed_units(&points);

    let mut centroids = DMatrix::zeros(n, n);
    let mut fallback_units = Vec::new();
    let mut warnings = Vec::new();
    for unit in 0..n {
        let owner = (0..clustering.cluster_count()).find(|&c| cluster_unit[c] == Some(unit));
        if let Some(c) = owner {
            for (i, v) in clustering.centroids[c].iter().enumerate() {
                centroids[(unit, i)] = *v;
            }
            continue;
        }
        fallback_units.push(unit);
        let rows: Vec<&Vec<f64>> = points
            .iter()
            .zip(&stressed)
            .filter(|(_, &u)| u == unit)
            .map(|(p, _)| p)
            .collect();
        if rows.is_empty() {
            warnings.push(format!(
                "degraded init: no cluster and no single-core rows for unit {unit}"
            ));
            let diag_mean = mean_diagonal(&clustering, &cluster_unit).unwrap_or(1.0);
            centroids[(unit, unit)] = diag_mean;
        } else {
            warnings.push(format!(
                "unit {unit} has no cluster; using the mean of its {} stressed rows",
                rows.len()
            ));
            for i in 0..n {
                centroids[(unit, i)] = rows.iter().map(|r| r[i]).sum::<f64>() / rows.len() as f64;
            }
        }
    }
    Ok(Hotspots {
        centroids,
        clustering,
        k_distance: kd,
        params,
        cluster_unit,
        fallback_units,
        outliers,
        warnings,
    })
}

fn mean_diagonal(c: &ClusterResult, cluster_unit: &[Option<usize>]) -> Option<f64> {
    let own: Vec<f64> = c
        .centroids
        .iter()
        .zip(cluster_unit)
        .filter_map(|(cent, u)| u.map(|u| cent[u]))
        .collect();
    if own.is_empty() {
        return None;
    }
    Some(own.iter().sum::<f64>() / own.len() as f64)
}

/// Maps clusters to units. When the clusters' argmax units are distinct each
/// cluster takes its argmax; otherwise the one-to-one assignment maximizing the
/// summed centroid coordinates is used. Surplus clusters map to nothing.
pub fn assign_clusters(centroids: &[Vec<f64>], n: usize) -> Vec<Option<usize>> {
    let argmaxes: Vec<usize> = centroids.iter().map(|c| argmax(c)).collect();
    let mut seen = vec![false; n];
    if argmaxes.iter().all(|&u| !std::mem::replace(&mut seen[u], true)) {
        return argmaxes.into_iter().map(Some).collect();
    }
    let c = centroids.len();
    let size = c.max(n);
    let top = centroids
        .iter()
        .flat_map(|v| v.iter())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    // Square cost matrix; padded rows or columns cost nothing.
    let cost = DMatrix::from_fn(size, size, |i, j| {
        if i < c && j < n {
            top - centroids[i][j]
        } else {
            0.0
        }
    });
    let matched = min_cost_assignment(&cost);
    (0..c)
        .map(|i| (matched[i] < n).then_some(matched[i]))
        .collect()
}

/// Hungarian method on a square cost matrix: `out[row]` is the column
/// assigned to `row` in a minimum-cost perfect matching.
pub fn min_cost_assignment(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    // Potentials and matching are 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            out[p[j] - 1] = j - 1;
        }
    }
    out
}

/// The unit each row stresses: the coordinate standing furthest above its
/// median over all rows, lowest index on ties. A constant offset on one
/// coordinate does not change the answer.
pub fn stressed_units(points: &[Vec<f64>]) -> Vec<usize> {
    let Some(first) = points.first() else {
        return Vec::new();
    };
    let d = first.len();
    let medians: Vec<f64> = (0..d)
        .map(|i| {
            let mut col: Vec<f64> = points.iter().map(|p| p[i]).collect();
            col.sort_by(f64::total_cmp);
            let m = col.len();
            if m % 2 == 1 {
                col[m / 2]
            } else {
                0.5 * (col[m / 2 - 1] + col[m / 2])
            }
        })
        .collect();
    points
        .iter()
        .map(|p| {
            let excess: Vec<f64> = p.iter().zip(&medians).map(|(x, m)| x - m).collect();
            argmax(&excess)
        })
        .collect()
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn three_four_five() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_eq!(euclidean(&[1.5, -2.0], &[1.5, -2.0]), 0.0);
    }

    #[test]
    fn distance_is_symmetric() {
        let p = [0.1, 7.3, -2.2];
        let q = [4.4, -0.6, 9.1];
        assert_eq!(euclidean(&p, &q).to_bits(), euclidean(&q, &p).to_bits());
    }

    #[test]
    fn evenly_spaced_line_gives_spacing() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![0.5 * i as f64]).collect();
        let kd = k_distance_eps(&pts, 1).unwrap();
        assert!(kd.curve.iter().all(|&v| (v - 0.5).abs() < 1e-12));
        assert!((kd.eps - 0.5).abs() < 1e-12);
    }

    #[test]
    fn k_not_below_point_count_is_an_error() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert!(k_distance_eps(&pts, 3).is_err());
        assert!(k_distance_eps(&pts, 5).is_err());
    }

    #[test]
    fn coincident_points_form_one_cluster() {
        let pts = vec![vec![1.0, 2.0]; 5];
        let r = dbscan(&pts, DbscanParams::new(0.5, 3).unwrap());
        assert_eq!(r.cluster_count(), 1);
        assert!(r.noise().is_empty());
        assert_eq!(r.centroids[0], vec![1.0, 2.0]);
    }

    #[test]
    fn isolated_points_are_noise() {
        let pts = vec![vec![0.0, 0.0], vec![10.0, 0.0], vec![0.0, 10.0]];
        let r = dbscan(&pts, DbscanParams::new(1.0, 2).unwrap());
        assert_eq!(r.labels, vec![Label::Noise; 3]);
        assert_eq!(r.cluster_count(), 0);
    }

    #[test]
    fn invalid_params_are_rejected() {
        assert!(DbscanParams::new(0.0, 3).is_err());
        assert!(DbscanParams::new(1.0, 1).is_err());
    }

    #[test]
    fn duplicated_rows_give_exact_centroids() {
        // Two units, three identical single-core rows each.
        let rows = [[2.0, 0.5], [2.0, 0.5], [2.0, 0.5], [0.6, 1.8], [0.6, 1.8], [0.6, 1.8]];
        let t_s = DMatrix::from_fn(6, 2, |j, i| rows[j][i]);
        let ds = SteadyStateDataset::new(t_s, DVector::from_element(6, 1.0)).unwrap();
        let h = hotspot_centroids(&ds).unwrap();
        assert_eq!(h.centroids, DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.6, 1.8]));
        assert!(h.fallback_units.is_empty());
    }

    #[test]
    fn missing_unit_falls_back_with_warning() {
        let rows = [[2.0, 0.5]; 4];
        let t_s = DMatrix::from_fn(4, 2, |j, i| rows[j][i]);
        let ds = SteadyStateDataset::new(t_s, DVector::from_element(4, 1.0)).unwrap();
        let h = hotspot_centroids(&ds).unwrap();
        assert_eq!(h.fallback_units, vec![1]);
        assert!(h.warnings[0].contains("degraded"));
        assert!(h.centroids[(1, 1)] > 0.0);
    }

    #[test]
    fn conflicting_clusters_are_matched_one_to_one() {
        // Both clusters peak on unit 0; the second leans towards unit 1.
        let c = vec![vec![3.0, 0.5], vec![2.0, 1.8]];
        assert_eq!(assign_clusters(&c, 2), vec![Some(0), Some(1)]);
        let surplus = vec![vec![3.0, 0.5], vec![2.9, 0.4], vec![0.2, 2.0]];
        assert_eq!(assign_clusters(&surplus, 2), vec![Some(0), None, Some(1)]);
    }

    #[test]
    fn hungarian_matches_brute_force() {
        let cost = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0]);
        let got = min_cost_assignment(&cost);
        let total = |a: &[usize]| a.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum::<f64>();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms.iter().map(|p| total(p)).fold(f64::INFINITY, f64::min);
        assert_eq!(total(&got), best);
    }

    #[test]
    fn stressed_unit_ignores_constant_offset() {
        let rows = vec![vec![5.0, 1.0, 1.0], vec![1.0, 5.0, 1.0], vec![1.0, 1.0, 5.0]];
        assert_eq!(stressed_units(&rows), vec![0, 1, 2]);
        let shifted: Vec<Vec<f64>> = rows.iter().map(|r| vec![r[0] + 9.0, r[1], r[2]]).collect();
        assert_eq!(stressed_units(&shifted), vec![0, 1, 2]);
    }

    #[test]
    fn log_elbow_survives_far_outliers() {
        let mut curve = vec![0.5, 0.45, 0.4, 0.05, 0.048, 0.046, 0.044, 0.042, 0.04, 0.038];
        let clean = curve[log_chord_elbow(&curve)];
        curve.splice(0..0, [50.0, 48.0, 46.0]);
        assert_eq!(curve[log_chord_elbow(&curve)], clean);
        assert!(curve[chord_elbow(&curve)] > clean);
        assert_eq!(log_chord_elbow(&[0.0, 0.0]), 0);
    }

    #[test]
    fn far_rows_are_flagged_as_outliers() {
        // Three units with five tight rows each, plus two rows far away.
        let mut rows = Vec::new();
        for u in 0..3 {
            for k in 0..5 {
                let mut r = vec![0.3; 3];
                r[u] = 1.0 + 0.01 * k as f64;
                rows.push(r);
            }
        }
        let base = rows.len();
        rows.push(vec![20.0, 3.0, 3.0]);
        rows.push(vec![3.0, 25.0, 3.0]);
        let t_s = DMatrix::from_fn(rows.len(), 3, |j, i| rows[j][i]);
        let ds = SteadyStateDataset::new(t_s, DVector::from_element(rows.len(), 1.0)).unwrap();
        let h = hotspot_centroids(&ds).unwrap();
        assert_eq!(h.outliers, vec![base, base + 1]);
        let clean = SteadyStateDataset::new(
            ds.t_s.rows(0, base).into_owned(),
            DVector::from_element(base, 1.0),
        )
        .unwrap();
        let h0 = hotspot_centroids(&clean).unwrap();
        assert!((&h.centroids - &h0.centroids).amax() < 1e-9);
    }
}
