//! Domain types shared by every stage of the pipeline, their invariants, and
//! the JSON/CSV file formats.
//!
//! Temperatures are absolute (kelvin) in [`ThermalTrace`] and rises above
//! ambient everywhere else. The steady-state relation `T_s = R P_s` is linear
//! only in rises.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_AMBIENT_K: f64 = 298.15;
pub const DEFAULT_DT_S: f64 = 0.1;

/// Slack below ambient accepted by [`ThermalTrace::check_physical`].
pub const AMBIENT_SLACK_K: f64 = 0.5;

/// Relative tolerance for entries that should be nonnegative but come out of
/// a floating-point product, e.g. `B = (I - A) R`.
const NEG_TOL: f64 = 1e-12;

/// The thermal state-space triple. `a` is the natural response, `b` the forced
/// response and `r` the steady-state thermal resistance, all `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub r: DMatrix<f64>,
}

impl SystemModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        for (name, m) in [("a", &a), ("b", &b), ("r", &r)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape(format!(
                    "matrix {name} is {}x{}, expected {n}x{n}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if n == 0 {
            return Err(Error::Shape("model has zero units".into()));
        }
        Ok(SystemModel { a, b, r })
    }

    /// Builds a model whose forced response is `(I - A) R`, the only choice
    /// whose fixed point reproduces `T = R P`.
    pub fn from_a_r(a: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        let b = forced_response(&a, &r);
        if b.nrows() != n {
            return Err(Error::Shape("a and r disagree in size".into()));
        }
        SystemModel::new(a, b, r)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }
}

/// `(I - A) R`.
pub fn forced_response(a: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    (DMatrix::identity(n, n) - a) * r
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].abs();
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Negative {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },
    NonFinite {
        matrix: &'static str,
        row: usize,
        col: usize,
    },
    SpectralRadius {
        value: f64,
    },
    NonPositiveDiagonal {
        index: usize,
        value: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Negative {
                matrix,
                row,
                col,
                value,
            } => write!(f, "nonnegativity: {matrix}[{row}][{col}] = {value}"),
            Violation::NonFinite { matrix, row, col } => {
                write!(f, "finiteness: {matrix}[{row}][{col}]")
            }
            Violation::SpectralRadius { value } => {
                write!(f, "spectral radius of a is {value}, must be < 1")
            }
            Violation::NonPositiveDiagonal { index, value } => {
                write!(f, "positive diagonal: r[{index}][{index}] = {value}")
            }
        }
    }
}

/// Checks every [`SystemModel`] invariant and returns the breaches. An empty
/// list means the model is valid.
pub fn validate_model(m: &SystemModel) -> Vec<Violation> {
    let mut out = Vec::new();
    for (name, mat) in [("a", &m.a), ("b", &m.b), ("r", &m.r)] {
        let scale = mat.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
        for i in 0..mat.nrows() {
            for j in 0..mat.ncols() {
                let v = mat[(i, j)];
                if !v.is_finite() {
                    out.push(Violation::NonFinite {
                        matrix: name,
                        row: i,
                        col: j,
                    });
                } else if v < -NEG_TOL * scale {
                    out.push(Violation::Negative {
                        matrix: name,
                        row: i,
                        col: j,
                        value: v,
                    });
                }
            }
        }
    }
    if m.a.iter().all(|v| v.is_finite()) {
        let rho = spectral_radius(&m.a);
        if rho >= 1.0 {
            out.push(Violation::SpectralRadius { value: rho });
        }
    }
    for i in 0..m.n() {
        let v = m.r[(i, i)];
        if !(v > 0.0) {
            out.push(Violation::NonPositiveDiagonal { index: i, value: v });
        }
    }
    out
}

/// Per-unit absolute temperatures sampled every `dt` seconds. Row `k` is the
/// temperature vector at step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalTrace {
    pub dt: f64,
    pub ambient: f64,
    pub samples: DMatrix<f64>,
}

impl ThermalTrace {
    /// Checks shape and finiteness only; see [`ThermalTrace::check_physical`]
    /// for the ambient bound, which attacked traces may legitimately break.
    pub fn new(dt: f64, ambient: f64, samples: DMatrix<f64>) -> Result<Self> {
        if samples.nrows() < 2 {
            return Err(Error::Shape(format!(
                "thermal trace needs at least 2 samples, got {}",
                samples.nrows()
            )));
        }
        if samples.ncols() == 0 {
            return Err(Error::Shape("thermal trace has no units".into()));
        }
        if !(dt > 0.0) || !ambient.is_finite() {
            return Err(Error::Validation(format!(
                "invalid dt {dt} or ambient {ambient}"
            )));
        }
        if let Some(idx) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite temperature at flat index {idx}"
            )));
        }
        Ok(ThermalTrace {
            dt,
            ambient,
            samples,
        })
    }

    pub fn n(&self) -> usize {
        self.samples.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Temperatures minus ambient.
    pub fn rises(&self) -> DMatrix<f64> {
        self.samples.map(|t| t - self.ambient)
    }

    pub fn check_physical(&self) -> Result<()> {
        let floor = self.ambient - AMBIENT_SLACK_K;
        for k in 0..self.len() {
            for i in 0..self.n() {
                if self.samples[(k, i)] < floor {
                    return Err(Error::Validation(format!(
                        "temperature {} at sample {k}, unit {i} is below ambient - {AMBIENT_SLACK_K} K",
                        self.samples[(k, i)]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-unit power (ground truth) and total power. Blind traces carry totals
/// only.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerTrace {
    pub samples: Option<DMatrix<f64>>,
    pub totals: DVector<f64>,
}

impl PowerTrace {
    pub fn from_samples(samples: DMatrix<f64>) -> Result<Self> {
        let totals = DVector::from_iterator(
            samples.nrows(),
            samples.row_iter().map(|row| row.sum()),
        );
        let trace = PowerTrace {
            samples: Some(samples),
            totals,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn blind(totals: DVector<f64>) -> Result<Self> {
        let trace = PowerTrace {
            samples: None,
            totals,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn n(&self) -> Option<usize> {
        self.samples.as_ref().map(|s| s.ncols())
    }

    /// Drops the per-unit columns, keeping what a blind estimator may see.
    pub fn to_blind(&self) -> PowerTrace {
        PowerTrace {
            samples: None,
            totals: self.totals.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, &t) in self.totals.iter().enumerate() {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(Error::Validation(format!(
                    "total power {t} at sample {k} is negative or non-finite"
                )));
            }
        }
        if let Some(s) = &self.samples {
            if s.nrows() != self.totals.len() {
                return Err(Error::Shape(format!(
                    "{} power rows but {} totals",
                    s.nrows(),
                    self.totals.len()
                )));
            }
            for k in 0..s.nrows() {
                let row = s.row(k);
                if let Some(i) = row.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
                    return Err(Error::Validation(format!(
                        "power {} at sample {k}, unit {i} is negative or non-finite",
                        row[i]
                    )));
                }
                let sum = row.sum();
                if (sum - self.totals[k]).abs() > 1e-9 * self.totals[k].abs().max(1e-300) {
                    return Err(Error::Validation(format!(
                        "sample {k}: unit powers sum to {sum} but total is {}",
                        self.totals[k]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Steady-state experiments: row `j` of `t_s` is the temperature rise vector
/// of experiment `j` and `p_total[j]` its measured total power.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStateDataset {
    pub t_s: DMatrix<f64>,
    pub p_total: DVector<f64>,
}

impl SteadyStateDataset {
    /// Enforces shapes, `M >= N` and nonnegative totals. Rises are not checked
    /// for sign here: a negatively biased sensor can push them below zero and
    /// the factorization clamps those entries itself.
    pub fn new(t_s: DMatrix<f64>, p_total: DVector<f64>) -> Result<Self> {
        if t_s.nrows() != p_total.len() {
            return Err(Error::Shape(format!(
                "{} experiments but {} totals",
                t_s.nrows(),
                p_total.len()
            )));
        }
        if t_s.ncols() == 0 {
            return Err(Error::Shape("steady-state dataset has no units".into()));
        }
        if t_s.nrows() < t_s.ncols() {
            return Err(Error::Shape(format!(
                "{} experiments for {} units; need at least as many experiments as units",
                t_s.nrows(),
                t_s.ncols()
            )));
        }
        if let Some(j) = p_total.iter().position(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::Validation(format!(
                "total power {} of experiment {j} is negative or non-finite",
                p_total[j]
            )));
        }
        if t_s.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite steady-state rise".into()));
        }
        Ok(SteadyStateDataset { t_s, p_total })
    }

    pub fn n(&self) -> usize {
        self.t_s.ncols()
    }

    pub fn experiments(&self) -> usize {
        self.t_s.nrows()
    }

    /// Each rise row divided by its experiment's total power (K/W).
    pub fn normalized_rows(&self) -> Vec<Vec<f64>> {
        (0..self.experiments())
            .map(|j| {
                let p = self.p_total[j].max(f64::MIN_POSITIVE);
                self.t_s.row(j).iter().map(|t| t / p).collect()
            })
            .collect()
    }

    /// Keeps the listed experiments, in the given order.
    pub fn select(&self, rows: &[usize]) -> Result<SteadyStateDataset> {
        let t_s = self.t_s.select_rows(rows);
        let p_total = DVector::from_iterator(rows.len(), rows.iter().map(|&j| self.p_total[j]));
        SteadyStateDataset::new(t_s, p_total)
    }

    /// Appends experiments given as (rises, total power).
    pub fn with_extra_rows(&self, rows: &[(Vec<f64>, f64)]) -> Result<SteadyStateDataset> {
        let n = self.n();
        let m = self.experiments();
        let mut t_s = self.t_s.clone().resize_vertically(m + rows.len(), 0.0);
        let mut p_total = self.p_total.clone().resize_vertically(m + rows.len(), 0.0);
        for (idx, (rise, p)) in rows.iter().enumerate() {
            if rise.len() != n {
                return Err(Error::Shape(format!(
                    "extra row has {} entries, expected {n}",
                    rise.len()
                )));
            }
            for (i, &v) in rise.iter().enumerate() {
                t_s[(m + idx, i)] = v;
            }
            p_total[m + idx] = *p;
        }
        SteadyStateDataset::new(t_s, p_total)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitClass {
    Core,
    Big,
    Little,
    Gpu,
}

impl UnitClass {
    /// Multiplier applied to a unit's self-resistance. Smaller blocks heat more
    /// per watt.
    pub fn resistance_scale(self) -> f64 {
        match self {
            UnitClass::Core => 1.0,
            UnitClass::Big => 0.85,
            UnitClass::Little => 1.15,
            UnitClass::Gpu => 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    Grid { rows: usize, cols: usize },
    Adjacency { pairs: Vec<(usize, usize)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floorplan {
    pub name: String,
    pub n: usize,
    pub layout: Layout,
    pub power_budget: f64,
    pub unit_classes: Vec<UnitClass>,
}

pub const BENCHMARK_FLOORPLANS: [&str; 4] = ["mesh2x2", "mesh2x4", "mesh4x4", "hetero6"];

impl Floorplan {
    pub fn mesh(name: &str, rows: usize, cols: usize, budget: f64) -> Floorplan {
        Floorplan {
            name: name.to_string(),
            n: rows * cols,
            layout: Layout::Grid { rows, cols },
            power_budget: budget,
            unit_classes: vec![UnitClass::Core; rows * cols],
        }
    }

    /// The four benchmark configurations: three homogeneous meshes at 80 W
    /// and a six-unit big.LITTLE+GPU arrangement at 15 W laid out as
    ///
    /// ```text
    /// little0 little1 big
    /// little2 little3 gpu
    /// ```
    pub fn by_name(name: &str) -> Result<Floorplan> {
        match name {
            "mesh2x2" => Ok(Floorplan::mesh(name, 2, 2, 80.0)),
            "mesh2x4" => Ok(Floorplan::mesh(name, 2, 4, 80.0)),
            "mesh4x4" => Ok(Floorplan::mesh(name, 4, 4, 80.0)),
            "hetero6" => Ok(Floorplan {
                name: name.to_string(),
                n: 6,
                layout: Layout::Grid { rows: 2, cols: 3 },
                power_budget: 15.0,
                unit_classes: vec![
                    UnitClass::Little,
                    UnitClass::Little,
                    UnitClass::Big,
                    UnitClass::Little,
                    UnitClass::Little,
                    UnitClass::Gpu,
                ],
            }),
            other => Err(Error::Usage(format!(
                "unknown floorplan '{other}', expected one of {BENCHMARK_FLOORPLANS:?}"
            ))),
        }
    }

    /// Symmetric, irreflexive neighbor relation.
    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        let mut adj = vec![vec![false; self.n]; self.n];
        match &self.layout {
            Layout::Grid { rows, cols } => {
                for r in 0..*rows {
                    for c in 0..*cols {
                        let i = r * cols + c;
                        if c + 1 < *cols {
                            adj[i][i + 1] = true;
                            adj[i + 1][i] = true;
                        }
                        if r + 1 < *rows {
                            adj[i][i + cols] = true;
                            adj[i + cols][i] = true;
                        }
                    }
                }
            }
            Layout::Adjacency { pairs } => {
                for &(i, j) in pairs {
                    if i != j && i < self.n && j < self.n {
                        adj[i][j] = true;
                        adj[j][i] = true;
                    }
                }
            }
        }
        adj
    }

    /// Hop distance between units over the adjacency graph; `usize::MAX` when
    /// disconnected.
    pub fn hop_distances(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut dist = vec![vec![usize::MAX; self.n]; self.n];
        for (src, row) in dist.iter_mut().enumerate() {
            row[src] = 0;
            let mut queue = std::collections::VecDeque::from([src]);
            while let Some(u) = queue.pop_front() {
                for v in 0..self.n {
                    if adj[u][v] && row[v] == usize::MAX {
                        row[v] = row[u] + 1;
                        queue.push_back(v);
                    }
                }
            }
        }
        dist
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Degenerate(format!("floorplan '{}' has no units", self.name)));
        }
        if let Layout::Grid { rows, cols } = self.layout {
            if rows * cols != self.n {
                return Err(Error::Shape(format!(
                    "floorplan '{}': {rows}x{cols} grid does not hold {} units",
                    self.name, self.n
                )));
            }
        }
        if let Layout::Adjacency { pairs } = &self.layout {
            if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i == j || i >= self.n || j >= self.n) {
                return Err(Error::Validation(format!(
                    "floorplan '{}': invalid adjacency pair ({i}, {j})",
                    self.name
                )));
            }
        }
        if self.unit_classes.len() != self.n {
            return Err(Error::Shape(format!(
                "floorplan '{}': {} unit classes for {} units",
                self.name,
                self.unit_classes.len(),
                self.n
            )));
        }
        if !(self.power_budget > 0.0) {
            return Err(Error::Validation(format!(
                "floorplan '{}': power budget must be positive",
                self.name
            )));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// File formats

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    n: usize,
    a: Vec<Vec<f64>>,
    b: Vec<Vec<f64>>,
    r: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(name: &str, rows: &[Vec<f64>], n: usize) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        let cols = rows.first().map_or(0, |r| r.len());
        return Err(Error::Shape(format!(
            "matrix {name} is {}x{cols} (or ragged), expected {n}x{n}",
            rows.len()
        )));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

pub fn model_to_json(m: &SystemModel) -> String {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        n: m.n(),
        a: to_rows(&m.a),
        b: to_rows(&m.b),
        r: to_rows(&m.r),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn model_from_json(text: &str) -> Result<SystemModel> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| {
        Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string())
    })?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::parse(
            "format_version",
            format!("unsupported version {}", file.format_version),
        ));
    }
    let a = from_rows("a", &file.a, file.n)?;
    let b = from_rows("b", &file.b, file.n)?;
    let r = from_rows("r", &file.r, file.n)?;
    SystemModel::new(a, b, r)
}

pub fn save_model(m: &SystemModel, path: &Path) -> Result<()> {
    write_text(path, &model_to_json(m))
}

pub fn load_model(path: &Path) -> Result<SystemModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

/// Writes `text` to `path`, creating missing parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut f = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<BufReader<File>>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(BufReader::new(f)))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::parse(format!("{}:{line}", path.display()), e.to_string())
}

/// Header plus numeric rows of a CSV file; each row is paired with its line.
fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<(u64, Vec<f64>)>)> {
    let mut rdr = csv_reader(path)?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(Error::Shape(format!(
                "{}:{line}: {} fields, header has {}",
                path.display(),
                rec.len(),
                header.len()
            )));
        }
        let mut vals = Vec::with_capacity(rec.len());
        for (field, name) in rec.iter().zip(&header) {
            let v: f64 = field.parse().map_err(|_| {
                Error::parse(
                    format!("{}:{line} field '{name}'", path.display()),
                    format!("'{field}' is not a number"),
                )
            })?;
            vals.push(v);
        }
        rows.push((line, vals));
    }
    Ok((header, rows))
}

/// `# key=value` metadata lines at the top of a CSV.
fn read_metadata(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .take_while(|l| l.starts_with('#'))
        .flat_map(|l| l.trim_start_matches('#').split_whitespace())
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect())
}

fn expect_header(path: &Path, header: &[String], expected: &[String]) -> Result<()> {
    if header != expected {
        return Err(Error::Shape(format!(
            "{}: header {:?} does not match expected {:?}",
            path.display(),
            header,
            expected
        )));
    }
    Ok(())
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

/// Thermal CSV: `# dt=.. ambient=..` then `k,t_1,...,t_N`.
pub fn thermal_to_csv(t: &ThermalTrace) -> String {
    let mut out = format!("# dt={} ambient={}\n", t.dt, t.ambient);
    let mut header = vec!["k".to_string()];
    header.extend(numbered("t", t.n()));
    out.push_str(&header.join(","));
    out.push('\n');
    for k in 0..t.len() {
        out.push_str(&k.to_string());
        for v in t.samples.row(k).iter() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

pub fn save_thermal(t: &ThermalTrace, path: &Path) -> Result<()> {
    write_text(path, &thermal_to_csv(t))
}

pub fn load_thermal(path: &Path) -> Result<ThermalTrace> {
    let meta = read_metadata(path)?;
    let get = |key: &str, default: f64| -> Result<f64> {
        match meta.iter().find(|(k, _)| k == key) {
            Some((_, v)) => v
                .parse()
                .map_err(|_| Error::parse(format!("{} metadata '{key}'", path.display()), v.clone())),
            None => Ok(default),
        }
    };
    let dt = get("dt", DEFAULT_DT_S)?;
    let ambient = get("ambient", DEFAULT_AMBIENT_K)?;
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() < 2 {
        return Err(Error::Shape(format!("{}: no unit columns", path.display())));
    }
    let n = header.len() - 1;
    let mut expected = vec!["k".to_string()];
    expected.extend(numbered("t", n));
    expect_header(path, &header, &expected)?;
    let samples = DMatrix::from_fn(rows.len(), n, |k, i| rows[k].1[i + 1]);
    ThermalTrace::new(dt, ambient, samples)
}

/// Power CSV: `k,p_1,...,p_N,p_total`, or `k,p_total` for blind traces.
pub fn power_to_csv(p: &PowerTrace) -> String {
    power_to_csv_from(p, 0)
}

/// [`power_to_csv`] with the `k` column counting from `start`.
pub fn power_to_csv_from(p: &PowerTrace, start: usize) -> String {
    let mut header = vec!["k".to_string()];
    if let Some(s) = &p.samples {
        header.extend(numbered("p", s.ncols()));
    }
    header.push("p_total".into());
    let mut out = header.join(",");
    out.push('\n');
    for k in 0..p.len() {
        out.push_str(&(start + k).to_string());
        if let Some(s) = &p.samples {
            for v in s.row(k).iter() {
                out.push(',');
                out.push_str(&v.to_string());
            }
        }
        out.push(',');
        out.push_str(&p.totals[k].to_string());
        out.push('\n');
    }
    out
}

pub fn save_power(p: &PowerTrace, path: &Path) -> Result<()> {
    write_text(path, &power_to_csv(p))
}

pub fn load_power(path: &Path) -> Result<PowerTrace> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() < 2 {
        return Err(Error::Shape(format!("{}: missing p_total column", path.display())));
    }
    let n = header.len() - 2;
    let mut expected = vec!["k".to_string()];
    expected.extend(numbered("p", n));
    expected.push("p_total".into());
    expect_header(path, &header, &expected)?;
    for (line, vals) in &rows {
        if let Some(pos) = vals[1..].iter().position(|&v| v < 0.0) {
            return Err(Error::Validation(format!(
                "{}:{line}: negative power in column '{}'",
                path.display(),
                header[pos + 1]
            )));
        }
    }
    let totals = DVector::from_iterator(rows.len(), rows.iter().map(|(_, v)| v[n + 1]));
    if n == 0 {
        return PowerTrace::blind(totals);
    }
    let samples = DMatrix::from_fn(rows.len(), n, |k, i| rows[k].1[i + 1]);
    let trace = PowerTrace {
        samples: Some(samples),
        totals,
    };
    trace.validate()?;
    Ok(trace)
}

/// Steady-state CSV: `exp,ts_1,...,ts_N,p_total`.
pub fn steady_to_csv(ds: &SteadyStateDataset) -> String {
    let mut header = vec!["exp".to_string()];
    header.extend(numbered("ts", ds.n()));
    header.push("p_total".into());
    let mut out = header.join(",");
    out.push('\n');
    for j in 0..ds.experiments() {
        out.push_str(&j.to_string());
        for v in ds.t_s.row(j).iter() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push(',');
        out.push_str(&ds.p_total[j].to_string());
        out.push('\n');
    }
    out
}

pub fn save_steady(ds: &SteadyStateDataset, path: &Path) -> Result<()> {
    write_text(path, &steady_to_csv(ds))
}

pub fn load_steady(path: &Path) -> Result<SteadyStateDataset> {
    let (header, rows) = read_numeric_csv(path)?;
    if header.len() < 3 {
        return Err(Error::Shape(format!("{}: no unit columns", path.display())));
    }
    let n = header.len() - 2;
    let mut expected = vec!["exp".to_string()];
    expected.extend(numbered("ts", n));
    expected.push("p_total".into());
    expect_header(path, &header, &expected)?;
    let t_s = DMatrix::from_fn(rows.len(), n, |j, i| rows[j].1[i + 1]);
    let p_total = DVector::from_iterator(rows.len(), rows.iter().map(|(_, v)| v[n + 1]));
    SteadyStateDataset::new(t_s, p_total)
}

/// Which CSV format a file holds, judged from its header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvKind {
    Thermal,
    Power,
    Steady,
}

pub fn sniff_csv(path: &Path) -> Result<CsvKind> {
    let mut rdr = csv_reader(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?;
    let first = header.get(0).unwrap_or("");
    let second = header.get(1).unwrap_or("");
    match (first, second) {
        ("exp", _) => Ok(CsvKind::Steady),
        ("k", s) if s.starts_with("t_") => Ok(CsvKind::Thermal),
        ("k", s) if s.starts_with("p_") => Ok(CsvKind::Power),
        _ => Err(Error::parse(
            format!("{}:1", path.display()),
            "unrecognized CSV header",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(a: f64, b: f64, r: f64) -> SystemModel {
        SystemModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, b),
            DMatrix::from_element(1, 1, r),
        )
        .unwrap()
    }

    #[test]
    fn valid_scalar_model_has_no_violations() {
        assert!(validate_model(&scalar_model(0.9, 0.1, 1.0)).is_empty());
    }

    #[test]
    fn unstable_a_is_flagged() {
        let v = validate_model(&scalar_model(1.2, 0.1, 1.0));
        assert_eq!(v, vec![Violation::SpectralRadius { value: 1.2 }]);
    }

    #[test]
    fn zero_resistance_diagonal_is_flagged() {
        let v = validate_model(&scalar_model(0.9, 0.1, 0.0));
        assert_eq!(v, vec![Violation::NonPositiveDiagonal { index: 0, value: 0.0 }]);
    }

    #[test]
    fn negative_entry_names_its_index() {
        let mut m = scalar_model(0.5, 0.5, 1.0);
        m.b = DMatrix::from_row_slice(1, 1, &[-0.3]);
        let v = validate_model(&m);
        assert!(matches!(
            v[0],
            Violation::Negative { matrix: "b", row: 0, col: 0, .. }
        ));
    }

    #[test]
    fn model_json_round_trip_is_bit_exact() {
        let m = SystemModel::new(
            DMatrix::from_row_slice(2, 2, &[0.9, 0.1 / 3.0, 1e-17, 0.7]),
            DMatrix::from_row_slice(2, 2, &[0.1, std::f64::consts::PI, 0.0, 0.3]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 1.0 + f64::EPSILON]),
        )
        .unwrap();
        let back = model_from_json(&model_to_json(&m)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn non_square_matrix_is_a_shape_error() {
        let text = r#"{"format_version":1,"n":3,"a":[[0,0],[0,0],[0,0]],
            "b":[[0,0,0],[0,0,0],[0,0,0]],"r":[[1,0,0],[0,1,0],[0,0,1]]}"#;
        assert!(matches!(model_from_json(text), Err(Error::Shape(_))));
    }

    #[test]
    fn missing_field_is_a_parse_error() {
        let text = r#"{"format_version":1,"n":1,"a":[[0.5]],"b":[[0.5]]}"#;
        match model_from_json(text) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("`r`")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn thermal_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let t = ThermalTrace::new(
            0.1,
            298.15,
            DMatrix::from_row_slice(2, 2, &[298.15, 300.123456789, 301.0 / 3.0 + 200.0, 299.5]),
        )
        .unwrap();
        save_thermal(&t, &path).unwrap();
        assert_eq!(load_thermal(&path).unwrap(), t);
        assert_eq!(sniff_csv(&path).unwrap(), CsvKind::Thermal);
    }

    #[test]
    fn negative_power_row_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "k,p_1,p_2,p_total\n0,1.0,-0.5,0.5\n").unwrap();
        assert!(matches!(load_power(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn header_unit_count_mismatch_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, "k,t_1,t_2\n0,300,301,302\n1,300,301,302\n").unwrap();
        assert!(matches!(load_thermal(&path), Err(Error::Shape(_))));
    }

    #[test]
    fn blind_power_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        let p = PowerTrace::blind(DVector::from_vec(vec![3.5, 4.25, 0.0])).unwrap();
        save_power(&p, &path).unwrap();
        assert_eq!(load_power(&path).unwrap(), p);
    }

    #[test]
    fn steady_rejects_fewer_experiments_than_units() {
        let r = SteadyStateDataset::new(DMatrix::zeros(1, 2), DVector::zeros(1));
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn benchmark_floorplans_are_valid() {
        for name in BENCHMARK_FLOORPLANS {
            let fp = Floorplan::by_name(name).unwrap();
            fp.validate().unwrap();
            let adj = fp.adjacency();
            for i in 0..fp.n {
                assert!(!adj[i][i]);
                for j in 0..fp.n {
                    assert_eq!(adj[i][j], adj[j][i]);
                }
            }
        }
        assert_eq!(Floorplan::by_name("hetero6").unwrap().power_budget, 15.0);
    }
}
