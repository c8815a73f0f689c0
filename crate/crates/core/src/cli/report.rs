//! Sweep tables, heatmaps and the band comparison.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::factorize::StrategyKind;
use crate::model::write_text;
use crate::sentinel::SweepReport;

/// Cell text for a result that could not be computed.
pub const FAILED: &str = "FAILED";
pub const TABLE4: &str = "table4.csv";

/// Offsets at or beyond this magnitude are pooled into one band per sign.
pub const BAND_EDGE: f64 = 6.0;

/// One line of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub xi: f64,
    pub dt: f64,
    pub trials: usize,
    pub detect_fail: usize,
    pub ident_fail: usize,
}

pub fn sweep_csv(rep: &SweepReport) -> String {
    let mut out = String::from("xi,dt,sensor_trials,detect_fail,ident_fail\n");
    for c in &rep.cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.xi, c.dt_error, c.trials, c.detection_failures, c.identification_failures
        ));
    }
    out
}

/// One line per attack: the offset, the attacked sensor, the deviation of the
/// refit and the sensor it blamed (empty when none).
pub fn trials_csv(rep: &SweepReport) -> String {
    let mut out = String::from("dt,sensor,deviation,suspect\n");
    for t in &rep.trials {
        let suspect = t.suspect.map_or_else(String::new, |s| s.to_string());
        out.push_str(&format!("{},{},{},{suspect}\n", t.dt_error, t.sensor, t.deviation));
    }
    out
}

pub fn load_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::parse(format!("{}:1", path.display()), e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != ["xi", "dt", "sensor_trials", "detect_fail", "ident_fail"] {
        return Err(Error::Shape(format!(
            "{}: header {header:?} is not a sweep table",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::parse(path.display().to_string(), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let at = |i: usize| format!("{}:{line} field {}", path.display(), header[i]);
        let float = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| Error::parse(at(i), format!("'{}' is not a number", &rec[i])))
        };
        let count = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| Error::parse(at(i), format!("'{}' is not a count", &rec[i])))
        };
        let row = SweepRow {
            xi: float(0)?,
            dt: float(1)?,
            trials: count(2)?,
            detect_fail: count(3)?,
            ident_fail: count(4)?,
        };
        if row.detect_fail + row.ident_fail > row.trials {
            return Err(Error::Validation(format!(
                "{}:{line}: more failures than trials",
                path.display()
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Sweep tables found in `dir`, as `(strategy tag, path)`, known strategies
/// first in their usual order.
pub fn find_sweeps(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(tag) = name.strip_prefix("sweep_").and_then(|n| n.strip_suffix(".csv")) {
            found.push((tag.to_string(), path.clone()));
        }
    }
    let rank = |tag: &str| {
        StrategyKind::ALL
            .iter()
            .position(|k| k.tag() == tag)
            .unwrap_or(StrategyKind::ALL.len())
    };
    found.sort_by(|a, b| rank(&a.0).cmp(&rank(&b.0)).then_with(|| a.0.cmp(&b.0)));
    Ok(found)
}

fn label_of(tag: &str) -> String {
    tag.parse::<StrategyKind>()
        .map_or_else(|_| tag.to_string(), |k| k.label().to_string())
}

/// Rewrites every heatmap and the band comparison from the sweep tables in
/// `dir`. Returns the files written.
pub fn render(dir: &Path) -> Result<Vec<PathBuf>> {
    let sweeps = find_sweeps(dir)?;
    if sweeps.is_empty() {
        return Err(Error::Validation(format!(
            "no sweep_<strategy>.csv tables in {}",
            dir.display()
        )));
    }
    let mut written = Vec::new();
    let mut tables = Vec::new();
    for (tag, path) in sweeps {
        let rows = load_sweep_csv(&path)?;
        let label = label_of(&tag);
        let svg_path = dir.join(format!("heatmap_{tag}.svg"));
        write_text(&svg_path, &heatmap_svg(&label, &rows))?;
        written.push(svg_path);
        tables.push((label, rows));
    }
    let t4 = dir.join(TABLE4);
    write_text(&t4, &table4_csv(&tables))?;
    written.push(t4);
    Ok(written)
}

/// Offset bands: every offset below [`BAND_EDGE`] on its own, the rest pooled
/// per sign and labelled `lo:hi`.
pub fn bands(dts: &[f64]) -> Vec<(String, Vec<f64>)> {
    let mut sorted = dts.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let neg: Vec<f64> = sorted.iter().copied().filter(|d| *d <= -BAND_EDGE).collect();
    let pos: Vec<f64> = sorted.iter().copied().filter(|d| *d >= BAND_EDGE).collect();
    let pooled = |v: Vec<f64>| (format!("{}:{}", v[0], v[v.len() - 1]), v);
    let mut out = Vec::new();
    if !neg.is_empty() {
        out.push(pooled(neg));
    }
    for &d in sorted.iter().filter(|d| d.abs() < BAND_EDGE) {
        out.push((d.to_string(), vec![d]));
    }
    if !pos.is_empty() {
        out.push(pooled(pos));
    }
    out
}

/// Detection and identification failure rates (percent of sensor trials)
/// per offset band, two columns per strategy.
pub fn table4_csv(tables: &[(String, Vec<SweepRow>)]) -> String {
    let mut dts: Vec<f64> = tables.iter().flat_map(|(_, r)| r.iter().map(|x| x.dt)).collect();
    dts.sort_by(f64::total_cmp);
    let mut header = vec!["dt".to_string()];
    for (label, _) in tables {
        header.push(format!("{label}_detect_pct"));
        header.push(format!("{label}_ident_pct"));
    }
    let mut out = header.join(",") + "\n";
    for (name, members) in bands(&dts) {
        out.push_str(&name);
        for (_, rows) in tables {
            let sel: Vec<&SweepRow> = rows.iter().filter(|r| members.contains(&r.dt)).collect();
            let trials: usize = sel.iter().map(|r| r.trials).sum();
            let det: usize = sel.iter().map(|r| r.detect_fail).sum();
            let ident: usize = sel.iter().map(|r| r.ident_fail).sum();
            if trials == 0 {
                out.push_str(",,");
                continue;
            }
            let pct = |c: usize| 100.0 * c as f64 / trials as f64;
            out.push_str(&format!(",{:.2},{:.2}", pct(det), pct(ident)));
        }
        out.push('\n');
    }
    out
}

const CELL: f64 = 28.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 48.0;

/// Failure counts over the (offset, tolerance) grid. Shading is the share of
/// sensor trials that failed either way; each cell is labelled with the
/// count.
pub fn heatmap_svg(label: &str, rows: &[SweepRow]) -> String {
    let mut dts: Vec<f64> = rows.iter().map(|r| r.dt).collect();
    dts.sort_by(f64::total_cmp);
    dts.dedup();
    let mut xis: Vec<f64> = rows.iter().map(|r| r.xi).collect();
    xis.sort_by(|a, b| b.total_cmp(a));
    xis.dedup();
    let width = MARGIN_LEFT + CELL * dts.len() as f64 + 16.0;
    let height = MARGIN_TOP + CELL * xis.len() as f64 + MARGIN_BOTTOM;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"sans-serif\" font-size=\"10\">\n"
    );
    s.push_str(&format!(
        "<text x=\"{MARGIN_LEFT}\" y=\"20\" font-size=\"13\">{label}: failures by offset and tolerance</text>\n"
    ));
    for r in rows {
        let (Some(col), Some(row)) = (
            dts.iter().position(|&d| d == r.dt),
            xis.iter().position(|&x| x == r.xi),
        ) else {
            continue;
        };
        let failed = r.detect_fail + r.ident_fail;
        let share = if r.trials > 0 {
            failed as f64 / r.trials as f64
        } else {
            0.0
        };
        let x = MARGIN_LEFT + CELL * col as f64;
        let y = MARGIN_TOP + CELL * row as f64;
        s.push_str(&format!(
            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\" stroke=\"#999\" stroke-width=\"0.5\"/>\n",
            shade(share)
        ));
        if failed > 0 {
            s.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{failed}</text>\n",
                x + CELL / 2.0,
                y + CELL / 2.0 + 3.5
            ));
        }
    }
    let bottom = MARGIN_TOP + CELL * xis.len() as f64;
    for (i, d) in dts.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{d}</text>\n",
            MARGIN_LEFT + CELL * (i as f64 + 0.5),
            bottom + 14.0
        ));
    }
    for (i, xi) in xis.iter().enumerate() {
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{xi}</text>\n",
            MARGIN_LEFT - 6.0,
            MARGIN_TOP + CELL * (i as f64 + 0.5) + 3.5
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">offset (K)</text>\n",
        MARGIN_LEFT + CELL * dts.len() as f64 / 2.0,
        bottom + 34.0
    ));
    s.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {})\">tolerance</text>\n",
        MARGIN_TOP + CELL * xis.len() as f64 / 2.0,
        MARGIN_TOP + CELL * xis.len() as f64 / 2.0
    ));
    s.push_str("</svg>\n");
    s
}

/// White through red.
fn shade(share: f64) -> String {
    let t = share.clamp(0.0, 1.0);
    let g = (255.0 * (1.0 - t)).round() as u8;
    format!("#ff{g:02x}{g:02x}")
}
