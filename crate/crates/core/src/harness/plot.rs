//! Results CSV and SVG line charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::{Algorithm, ResultRow, ResultTable, SweepVar};
use crate::bandit::DataModel;
use crate::error::{Error, Result};

const HEADER: [&str; 7] = ["model", "case", "vary", "value", "algorithm", "mean_subopt", "trials"];

const PALETTE: [&str; 6] = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"];

pub fn write_results_csv<W: Write>(table: &ResultTable, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(HEADER).map_err(io)?;
    for r in &table.rows {
        w.write_record([
            r.model.to_string(),
            r.case.clone(),
            r.vary.to_string(),
            r.value.to_string(),
            r.algorithm.name().to_string(),
            r.mean_subopt.to_string(),
            r.trials.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(raw: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(raw.to_string())).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("invalid {what} {raw:?}"),
    })
}

fn number<T: std::str::FromStr>(raw: &str, path: &Path, line: usize, what: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Parse { path: path.to_path_buf(), line, message: format!("invalid {what} {raw:?}") })
}

/// Reads a results CSV back; columns beyond the CSV schema are left at defaults.
pub fn read_results_csv(path: &Path) -> Result<ResultTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse { path: path.to_path_buf(), line, message: e.to_string() })?;
        let fields: Vec<&str> = rec.iter().map(str::trim).collect();
        if i == 0 {
            if fields != HEADER {
                return Err(Error::Parse { path: path.to_path_buf(), line, message: format!("expected header {}", HEADER.join(",")) });
            }
            continue;
        }
        if fields.len() != HEADER.len() {
            return Err(Error::Parse { path: path.to_path_buf(), line, message: format!("expected {} fields, found {}", HEADER.len(), fields.len()) });
        }
        let model: DataModel = parse(fields[0], path, line, "model")?;
        let vary: SweepVar = parse(&fields[2].to_lowercase(), path, line, "sweep variable")?;
        let algorithm: Algorithm = parse(fields[4], path, line, "algorithm")?;
        rows.push(ResultRow {
            model,
            case: fields[1].to_string(),
            vary,
            value: number(fields[3], path, line, "value")?,
            algorithm,
            mean_subopt: number(fields[5], path, line, "mean_subopt")?,
            trials: number(fields[6], path, line, "trials")?,
            se: 0.0,
            flagged: 0,
            fallbacks: 0,
            per_dataset: Vec::new(),
        });
    }
    Ok(ResultTable { rows })
}

fn panel_key(r: &ResultRow) -> (String, String, SweepVar) {
    (r.model.to_string(), r.case.clone(), r.vary)
}

fn axis_label(v: SweepVar) -> &'static str {
    match v {
        SweepVar::N => "N",
        SweepVar::K => "k",
        SweepVar::Gamma => "gamma",
        SweepVar::Eta => "eta",
    }
}

fn fmt_tick(x: f64) -> String {
    if x == 0.0 {
        "0".into()
    } else if x.abs() >= 100.0 {
        format!("{x:.0}")
    } else if x.abs() >= 1.0 {
        format!("{x:.2}")
    } else {
        format!("{x:.3}")
    }
}

/// One SVG line chart per `(model, case, vary)` panel, keyed by file stem.
pub fn render_panels(table: &ResultTable) -> Vec<(String, String)> {
    let mut panels: BTreeMap<(String, String, SweepVar), Vec<&ResultRow>> = BTreeMap::new();
    for r in &table.rows {
        panels.entry(panel_key(r)).or_default().push(r);
    }
    panels
        .into_iter()
        .map(|((model, case, vary), rows)| (format!("{model}_{case}_{vary}"), render(&model, &case, vary, &rows)))
        .collect()
}

fn render(model: &str, case: &str, vary: SweepVar, rows: &[&ResultRow]) -> String {
    let (w, h) = (640.0, 420.0);
    let (left, right, top, bottom) = (70.0, 150.0, 40.0, 50.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let finite = rows.iter().filter(|r| r.mean_subopt.is_finite());
    let xs: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let (x0, mut x1) = (xs.iter().copied().fold(f64::INFINITY, f64::min), xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    let ymax = finite.map(|r| r.mean_subopt).fold(0.0, f64::max);
    let ymax = if ymax > 0.0 { ymax * 1.1 } else { 1e-3 };
    let sx = |x: f64| left + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + ph - y / ymax * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{model} / {case} / vary {}</text>"#, left + pw / 2.0, axis_label(vary));
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#, top + ph, left + pw, top + ph);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>"#, top + ph);
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = ymax * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, sx(fx), top + ph + 18.0, fmt_tick(fx));
        let _ = writeln!(s, r##"<line x1="{left}" y1="{:.1}" x2="{}" y2="{:.1}" stroke="#ddd"/>"##, sy(fy), left + pw, sy(fy));
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, left - 6.0, sy(fy) + 4.0, fmt_tick(fy));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, left + pw / 2.0, h - 12.0, axis_label(vary));
    let _ = writeln!(s, r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">mean sub-optimality</text>"#, top + ph / 2.0, top + ph / 2.0);

    let mut series: BTreeMap<Algorithm, Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        if r.mean_subopt.is_finite() {
            series.entry(r.algorithm).or_default().push((r.value, r.mean_subopt));
        }
    }
    for (i, (alg, mut pts)) in series.into_iter().enumerate() {
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#, path.join(" "));
        for &(x, y) in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, sx(x), sy(y));
        }
        let ly = top + 10.0 + 20.0 * i as f64;
        let lx = left + pw + 15.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, alg.name());
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `results.csv`, `results.json` and one SVG per panel into `dir`.
pub fn emit_results(table: &ResultTable, dir: &Path) -> Result<Vec<PathBuf>> {
    if table.rows.is_empty() {
        return Err(Error::InvalidParameter("no result rows to emit".into()));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let csv_path = dir.join("results.csv");
    write_results_csv(table, std::fs::File::create(&csv_path)?)?;
    written.push(csv_path);
    let json_path = dir.join("results.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(table)?)?;
    written.push(json_path);
    for (stem, svg) in render_panels(table) {
        let p = dir.join(format!("{stem}.svg"));
        std::fs::write(&p, svg)?;
        written.push(p);
    }
    Ok(written)
}
