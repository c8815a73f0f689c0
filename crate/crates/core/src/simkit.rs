//! Synthetic ground truth: lumped-RC thermal models built from a floorplan,
//! power workloads, forward simulation of `T(k) = A T(k-1) + B P(k)`, and
//! sensor-offset injection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    Floorplan, PowerTrace, SteadyStateDataset, SystemModel, ThermalTrace, UnitClass, spectral_radius,
};

/// Seeded generator for one named purpose. Distinct `stream` values give
/// independent sequences from the same seed.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_MODEL: u64 = 1;
const STREAM_STEADY: u64 = 2;
const STREAM_COOLING: u64 = 3;
const STREAM_WORKLOAD: u64 = 16;

/// Builds a thermal model for `fp` from a conductance network.
///
/// Ground conductances and neighbor conductances are drawn at random, the
/// resistance matrix is the inverse of the resulting (symmetric M-matrix)
/// conductance matrix rescaled so that each self-resistance lands in
/// `[0.8, 1.2]` K/W times the unit's class scale. Heat capacities set the
/// natural response `A = I - (sC)^{-1} G`, with `s` chosen so the spectral
/// radius of `A` is a draw from `[0.85, 0.99]`. `B = (I - A) R`.
pub fn synth_model(fp: &Floorplan, seed: u64) -> Result<SystemModel> {
    fp.validate()?;
    let n = fp.n;
    let adj = fp.adjacency();
    let mut rng = rng_for(seed, STREAM_MODEL);

    for _attempt in 0..1000 {
        let g_ground: Vec<f64> = (0..n).map(|_| rng.gen_range(0.8..1.2)).collect();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            g[(i, i)] = g_ground[i];
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if adj[i][j] {
                    let gij = rng.gen_range(0.22..0.38);
                    g[(i, j)] -= gij;
                    g[(j, i)] -= gij;
                    g[(i, i)] += gij;
                    g[(j, j)] += gij;
                }
            }
        }
        let r0 = match g.clone().try_inverse() {
            Some(r) => r,
            None => continue,
        };
        let targets: Vec<f64> = fp
            .unit_classes
            .iter()
            .map(|c| rng.gen_range(0.8..1.2) * c.resistance_scale())
            .collect();
        let d: Vec<f64> = (0..n).map(|i| (targets[i] / r0[(i, i)]).sqrt()).collect();
        // R = D G^{-1} D, G' = D^{-1} G D^{-1}; zero pattern of G' is exact.
        let mut r = DMatrix::from_fn(n, n, |i, j| d[i] * r0[(i, j)] * d[j]);
        r = (&r + r.transpose()) * 0.5;
        for i in 0..n {
            r[(i, i)] = targets[i];
        }
        let gs = DMatrix::from_fn(n, n, |i, j| g[(i, j)] / (d[i] * d[j]));

        if !neighbor_coupling_in_range(&r, &adj) {
            continue;
        }

        let cap: Vec<f64> = fp
            .unit_classes
            .iter()
            .map(|c| capacity_scale(*c) * rng.gen_range(0.8..1.2))
            .collect();
        // Eigenvalues of C^{-1} G' via the symmetric C^{-1/2} G' C^{-1/2}.
        let sym = DMatrix::from_fn(n, n, |i, j| gs[(i, j)] / (cap[i] * cap[j]).sqrt());
        let eig = SymmetricEigen::new(sym);
        let lambda_min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(lambda_min > 0.0) {
            continue;
        }
        let rho: f64 = rng.gen_range(0.85..0.99);
        let s = lambda_min / (1.0 - rho);
        let mut a = DMatrix::zeros(n, n);
        let mut ok = true;
        for i in 0..n {
            for j in 0..n {
                let off = gs[(i, j)] / (s * cap[i]);
                a[(i, j)] = if i == j { 1.0 - off } else { -off };
            }
            if a[(i, i)] < 0.0 {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        return SystemModel::from_a_r(a, r);
    }
    Err(Error::Degenerate(format!(
        "could not draw a stable model for floorplan '{}'",
        fp.name
    )))
}

fn capacity_scale(c: UnitClass) -> f64 {
    match c {
        UnitClass::Core => 1.0,
        UnitClass::Big => 1.3,
        UnitClass::Little => 0.8,
        UnitClass::Gpu => 1.5,
    }
}

/// Neighbor couplings must sit in `[0.1, 0.3]` of the self-resistance and
/// every non-neighbor coupling below the weakest neighbor coupling of that row.
fn neighbor_coupling_in_range(r: &DMatrix<f64>, adj: &[Vec<bool>]) -> bool {
    let n = r.nrows();
    for i in 0..n {
        let mut min_nb = f64::INFINITY;
        for j in 0..n {
            if adj[i][j] {
                let ratio = r[(i, j)] / r[(i, i)];
                if !(0.1..=0.3).contains(&ratio) {
                    return false;
                }
                min_nb = min_nb.min(r[(i, j)]);
            }
        }
        for j in 0..n {
            if i != j && !adj[i][j] && r[(i, j)] >= min_nb {
                return false;
            }
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadKind {
    /// Piecewise-constant random power levels.
    StepStress,
    /// Bounded per-unit random walk.
    RandomWalk,
    /// One unit loaded, all others at their idle floor.
    SingleCoreStress(usize),
    /// Zero power everywhere.
    Cooling,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadSpec {
    pub kind: WorkloadKind,
    pub duration: usize,
    pub budget: f64,
    pub seed: u64,
}

/// Idle floor of each unit: 1-2% of the budget.
fn idle_floor<R: Rng>(rng: &mut R, n: usize, budget: f64) -> Vec<f64> {
    (0..n).map(|_| budget * rng.gen_range(0.01..0.02)).collect()
}

pub fn gen_power(fp: &Floorplan, spec: &WorkloadSpec) -> Result<PowerTrace> {
    fp.validate()?;
    let n = fp.n;
    let k = spec.duration;
    if k == 0 {
        return Err(Error::Validation("workload duration must be positive".into()));
    }
    if !(spec.budget > 0.0) {
        return Err(Error::Validation("workload budget must be positive".into()));
    }
    let budget = spec.budget;
    let mut rng = rng_for(spec.seed, STREAM_WORKLOAD);
    let mut samples = DMatrix::zeros(k, n);
    match spec.kind {
        WorkloadKind::Cooling => {}
        WorkloadKind::SingleCoreStress(unit) => {
            if unit >= n {
                return Err(Error::Validation(format!(
                    "stressed unit {unit} outside 0..{n}"
                )));
            }
            let floor = idle_floor(&mut rng, n, budget);
            let spare = budget - floor.iter().sum::<f64>();
            let load = rng.gen_range(0.5..1.0) * spare;
            for t in 0..k {
                for i in 0..n {
                    samples[(t, i)] = floor[i];
                }
                samples[(t, unit)] += load;
            }
        }
        WorkloadKind::StepStress => {
            let floor = idle_floor(&mut rng, n, budget);
            let spare = budget - floor.iter().sum::<f64>();
            let seg = (k / 5).max(1);
            let mut levels = vec![0.0; n];
            for t in 0..k {
                if t % seg == 0 {
                    let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let total_w: f64 = w.iter().sum::<f64>().max(1e-12);
                    let used = rng.gen_range(0.3..1.0) * spare;
                    for i in 0..n {
                        levels[i] = floor[i] + used * w[i] / total_w;
                    }
                }
                for i in 0..n {
                    samples[(t, i)] = levels[i];
                }
            }
        }
        WorkloadKind::RandomWalk => {
            let floor = idle_floor(&mut rng, n, budget);
            let spare = budget - floor.iter().sum::<f64>();
            let hi: Vec<f64> = floor.iter().map(|f| f + spare / n as f64).collect();
            let mut level: Vec<f64> = (0..n)
                .map(|i| rng.gen_range(floor[i]..hi[i]))
                .collect();
            for t in 0..k {
                for i in 0..n {
                    let span = hi[i] - floor[i];
                    let step = rng.gen_range(-0.08..0.08) * span;
                    let mut v = level[i] + step;
                    // Reflect at the bounds.
                    if v < floor[i] {
                        v = 2.0 * floor[i] - v;
                    }
                    if v > hi[i] {
                        v = 2.0 * hi[i] - v;
                    }
                    level[i] = v.clamp(floor[i], hi[i]);
                    samples[(t, i)] = level[i];
                }
            }
        }
    }
    PowerTrace::from_samples(samples)
}

/// Iterates `T(k) = A T(k-1) + B P(k)` on rises. Row 0 of the output is `t0`;
/// power row 0 precedes the trace and is not used.
pub fn forward_sim(
    m: &SystemModel,
    p: &PowerTrace,
    t0: &DVector<f64>,
    ambient: f64,
    dt: f64,
) -> Result<ThermalTrace> {
    let n = m.n();
    let samples_p = p
        .samples
        .as_ref()
        .ok_or_else(|| Error::Shape("forward simulation needs per-unit power".into()))?;
    if samples_p.ncols() != n || t0.len() != n {
        return Err(Error::Shape(format!(
            "model has {n} units, power has {}, initial state has {}",
            samples_p.ncols(),
            t0.len()
        )));
    }
    if let Some(i) = t0.iter().position(|&t| t < ambient) {
        return Err(Error::Validation(format!(
            "initial temperature of unit {i} is below ambient"
        )));
    }
    let k = samples_p.nrows();
    let mut out = DMatrix::zeros(k, n);
    out.row_mut(0).copy_from(&t0.transpose());
    let mut rise = t0.map(|t| t - ambient);
    for step in 1..k {
        let pk = samples_p.row(step).transpose();
        rise = &m.a * &rise + &m.b * pk;
        for i in 0..n {
            out[(step, i)] = rise[i] + ambient;
        }
    }
    ThermalTrace::new(dt, ambient, out)
}

/// Steady-state experiment mix: `single_per_unit` single-core-stress
/// experiments for every unit followed by `mixed` experiments that load two or
/// three units at once.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SteadySuite {
    pub single_per_unit: usize,
    pub mixed: usize,
}

impl SteadySuite {
    /// `n + 3` single-core experiments per unit (enough for a DBSCAN cluster
    /// at `MinPts = n + 1`) plus `n` mixed experiments.
    pub fn default_for(n: usize) -> Self {
        SteadySuite {
            single_per_unit: n + 3,
            mixed: n,
        }
    }

    /// Splits a total experiment budget `m` between single-core and mixed
    /// experiments, keeping at least one single-core experiment per unit.
    pub fn from_total(m: usize, n: usize) -> Result<Self> {
        if m < n {
            return Err(Error::Shape(format!(
                "{m} steady-state experiments for {n} units"
            )));
        }
        let single = (m / (n + 1)).max(1);
        Ok(SteadySuite {
            single_per_unit: single,
            mixed: m - single * n,
        })
    }

    pub fn experiments(&self, n: usize) -> usize {
        self.single_per_unit * n + self.mixed
    }
}

/// A generated steady-state dataset together with the per-unit powers that
/// produced it. The powers are for scoring only.
#[derive(Debug, Clone)]
pub struct SteadyData {
    pub dataset: SteadyStateDataset,
    /// `M x N` ground-truth per-unit power of each experiment.
    pub p_s: DMatrix<f64>,
    /// The loaded unit of single-core experiments; `None` for mixed ones.
    pub stressed: Vec<Option<usize>>,
}

pub fn gen_steady_dataset(
    m: &SystemModel,
    fp: &Floorplan,
    suite: SteadySuite,
    seed: u64,
) -> Result<SteadyData> {
    fp.validate()?;
    let n = m.n();
    if fp.n != n {
        return Err(Error::Shape(format!(
            "floorplan has {} units, model has {n}",
            fp.n
        )));
    }
    let total = suite.experiments(n);
    if total < n || suite.single_per_unit == 0 {
        return Err(Error::Shape(format!(
            "{total} experiments for {n} units; need M >= N and one single-core experiment per unit"
        )));
    }
    let budget = fp.power_budget;
    let mut rng = rng_for(seed, STREAM_STEADY);
    let mut p_s = DMatrix::zeros(total, n);
    let mut stressed = Vec::with_capacity(total);
    let mut row = 0;
    for rep in 0..suite.single_per_unit {
        for unit in 0..n {
            let _ = rep;
            let floor = idle_floor(&mut rng, n, budget);
            let spare = budget - floor.iter().sum::<f64>();
            let load = rng.gen_range(0.3..0.9) * spare;
            for i in 0..n {
                p_s[(row, i)] = floor[i];
            }
            p_s[(row, unit)] += load;
            stressed.push(Some(unit));
            row += 1;
        }
    }
    for _ in 0..suite.mixed {
        let floor = idle_floor(&mut rng, n, budget);
        let spare = budget - floor.iter().sum::<f64>();
        for i in 0..n {
            p_s[(row, i)] = floor[i];
        }
        let count = if n >= 3 { rng.gen_range(2..=3) } else { n.min(2) };
        let mut units: Vec<usize> = Vec::with_capacity(count);
        while units.len() < count {
            let u = rng.gen_range(0..n);
            if !units.contains(&u) {
                units.push(u);
            }
        }
        let used = rng.gen_range(0.3..0.9) * spare;
        let w: Vec<f64> = units.iter().map(|_| rng.gen_range(0.2..1.0)).collect();
        let wsum: f64 = w.iter().sum();
        for (u, wi) in units.iter().zip(&w) {
            p_s[(row, *u)] += used * wi / wsum;
        }
        stressed.push(None);
        row += 1;
    }
    let t_s = (&m.r * p_s.transpose()).transpose();
    let p_total = DVector::from_iterator(total, p_s.row_iter().map(|r| r.sum()));
    Ok(SteadyData {
        dataset: SteadyStateDataset::new(t_s, p_total)?,
        p_s,
        stressed,
    })
}

/// Samples needed for the slowest thermal mode of `m` to decay below
/// `residual` of its initial amplitude.
pub fn settle_samples(m: &SystemModel, residual: f64) -> usize {
    let rho = spectral_radius(&m.a);
    if rho <= 0.0 {
        return 1;
    }
    if rho >= 1.0 {
        return usize::MAX;
    }
    (residual.ln() / rho.ln()).ceil().max(1.0) as usize
}

/// How a steady-state dataset is recorded from a running chip.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyCapture {
    /// Evenly spaced readings taken over each experiment's hold period; the
    /// last one lands at the end of the hold.
    pub per_experiment: usize,
    /// The hold lasts until the slowest mode has decayed to this fraction.
    pub settle_residual: f64,
}

impl Default for SteadyCapture {
    fn default() -> Self {
        SteadyCapture {
            per_experiment: 4,
            settle_residual: 1e-3,
        }
    }
}

/// Runs the experiments of [`gen_steady_dataset`] back to back from ambient
/// through the dynamic model and records readings during each hold. Early
/// readings of an experiment still carry heat from the previous one, so only
/// the late ones satisfy `t_s = R p_s`.
pub fn capture_steady_dataset(
    m: &SystemModel,
    fp: &Floorplan,
    suite: SteadySuite,
    capture: SteadyCapture,
    seed: u64,
) -> Result<SteadyData> {
    if capture.per_experiment == 0 {
        return Err(Error::Validation("capture needs at least one reading per experiment".into()));
    }
    if !(capture.settle_residual > 0.0 && capture.settle_residual < 1.0) {
        return Err(Error::Validation("settle residual must lie in (0, 1)".into()));
    }
    let exact = gen_steady_dataset(m, fp, suite, seed)?;
    let n = m.n();
    let hold = settle_samples(m, capture.settle_residual).max(capture.per_experiment);
    let per = capture.per_experiment;
    let marks: Vec<usize> = (1..=per).map(|i| (hold * i).div_ceil(per)).collect();
    let rows = exact.p_s.nrows() * per;
    let mut t_s = DMatrix::zeros(rows, n);
    let mut p_s = DMatrix::zeros(rows, n);
    let mut stressed = Vec::with_capacity(rows);
    let mut rise = DVector::zeros(n);
    let mut row = 0;
    for e in 0..exact.p_s.nrows() {
        let p = exact.p_s.row(e).transpose();
        let bp = &m.b * &p;
        let mut next = 0;
        for step in 1..=hold {
            rise = &m.a * &rise + &bp;
            if next < per && step == marks[next] {
                t_s.row_mut(row).copy_from(&rise.transpose());
                p_s.row_mut(row).copy_from(&p.transpose());
                stressed.push(exact.stressed[e]);
                row += 1;
                next += 1;
            }
        }
    }
    let p_total = DVector::from_iterator(rows, p_s.row_iter().map(|r| r.sum()));
    Ok(SteadyData {
        dataset: SteadyStateDataset::new(t_s, p_total)?,
        p_s,
        stressed,
    })
}

/// A zero-power trace of `k` samples starting from the steady state of a
/// random power vector, so that every thermal mode is excited.
pub fn gen_cooling(
    m: &SystemModel,
    fp: &Floorplan,
    k: usize,
    seed: u64,
    ambient: f64,
    dt: f64,
) -> Result<ThermalTrace> {
    let n = m.n();
    let mut rng = rng_for(seed, STREAM_COOLING);
    let p0 = DVector::from_fn(n, |_, _| rng.gen_range(0.2..1.0) * fp.power_budget / n as f64);
    let rise0 = &m.r * p0;
    let t0 = rise0.map(|r| r.max(0.0) + ambient);
    let zeros = PowerTrace::from_samples(DMatrix::zeros(k.max(2), n))?;
    forward_sim(m, &zeros, &t0, ambient, dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackScenario {
    pub sensor: usize,
    /// Constant offset added to the sensor reading (K). Zero means benign.
    pub dt_error: f64,
    pub xi: f64,
}

impl AttackScenario {
    pub fn is_benign(&self) -> bool {
        self.dt_error == 0.0
    }
}

/// Adds `dt_error` to every reading of one sensor; all other entries are
/// copied unchanged.
pub fn inject_attack(t: &ThermalTrace, s: &AttackScenario) -> Result<ThermalTrace> {
    if s.sensor >= t.n() {
        return Err(Error::Validation(format!(
            "sensor {} outside 0..{}",
            s.sensor,
            t.n()
        )));
    }
    let mut out = t.clone();
    if s.dt_error != 0.0 {
        for k in 0..out.len() {
            out.samples[(k, s.sensor)] += s.dt_error;
        }
    }
    Ok(out)
}

/// Same offset applied to the steady-state rises of one sensor.
pub fn inject_attack_steady(
    ds: &SteadyStateDataset,
    s: &AttackScenario,
) -> Result<SteadyStateDataset> {
    if s.sensor >= ds.n() {
        return Err(Error::Validation(format!(
            "sensor {} outside 0..{}",
            s.sensor,
            ds.n()
        )));
    }
    let mut out = ds.clone();
    if s.dt_error != 0.0 {
        for j in 0..out.experiments() {
            out.t_s[(j, s.sensor)] += s.dt_error;
        }
    }
    Ok(out)
}
