//! CSV and SVG output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{ExperimentResult, Series};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "round,mean,stderr";

pub fn series_csv(series: &Series) -> String {
    let mut out = String::with_capacity(32 * series.rounds.len());
    out.push_str(CSV_HEADER);
    out.push('\n');
    for i in 0..series.rounds.len() {
        let _ = writeln!(out, "{},{},{}", series.rounds[i], series.mean[i], series.stderr[i]);
    }
    out
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

/// Writes `<dir>/<policy>_<metric>.csv` for every series; returns the paths written.
pub fn emit_csv(results: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for p in &results.policies {
        for s in &p.series {
            let path = dir.join(format!("{}_{}.csv", p.name, s.metric));
            write(&path, &series_csv(s))?;
            paths.push(path);
        }
    }
    Ok(paths)
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Mean curves with a +-stderr band, one SVG per metric.
pub fn emit_plot(results: &ExperimentResult, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut metrics: Vec<&str> = Vec::new();
    for p in &results.policies {
        for s in &p.series {
            if !metrics.contains(&s.metric.as_str()) {
                metrics.push(&s.metric);
            }
        }
    }
    let mut paths = Vec::new();
    for m in metrics {
        let curves: Vec<(&str, &Series)> = results
            .policies
            .iter()
            .filter_map(|p| p.series.iter().find(|s| s.metric == m).map(|s| (p.name.as_str(), s)))
            .collect();
        let path = dir.join(format!("{m}.svg"));
        write(&path, &svg(m, &curves))?;
        paths.push(path);
    }
    Ok(paths)
}

fn svg(title: &str, curves: &[(&str, &Series)]) -> String {
    let (w, h, pad) = (720.0, 440.0, 60.0);
    let mut x_max: f64 = 1.0;
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, s) in curves {
        for i in 0..s.rounds.len() {
            x_max = x_max.max(s.rounds[i] as f64);
            y_min = y_min.min(s.mean[i] - s.stderr[i]);
            y_max = y_max.max(s.mean[i] + s.stderr[i]);
        }
    }
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    if y_max - y_min < 1e-12 {
        y_max = y_min + 1.0;
    }
    let px = |x: f64| pad + x / x_max * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y_min) / (y_max - y_min) * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        title
    );
    let _ = writeln!(
        out,
        r#"<line x1="{pad}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{}" stroke="black"/>"#,
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    for k in 0..=4 {
        let fy = y_min + (y_max - y_min) * k as f64 / 4.0;
        let fx = x_max * k as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{:.3}</text><text x="{}" y="{}" text-anchor="middle">{:.0}</text>"#,
            pad - 6.0,
            py(fy) + 4.0,
            fy,
            px(fx),
            h - pad + 18.0,
            fx
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">round</text>"#,
        w / 2.0,
        h - 16.0
    );
    for (k, (name, s)) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let n = s.rounds.len();
        if n == 0 {
            continue;
        }
        let mut band = String::new();
        for i in 0..n {
            let _ = write!(band, "{:.2},{:.2} ", px(s.rounds[i] as f64), py(s.mean[i] + s.stderr[i]));
        }
        for i in (0..n).rev() {
            let _ = write!(band, "{:.2},{:.2} ", px(s.rounds[i] as f64), py(s.mean[i] - s.stderr[i]));
        }
        let _ = writeln!(out, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
        let mut line = String::new();
        for i in 0..n {
            let _ = write!(line, "{:.2},{:.2} ", px(s.rounds[i] as f64), py(s.mean[i]));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            line.trim_end()
        );
        let ly = pad + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            pad + 12.0,
            pad + 32.0,
            pad + 38.0,
            ly + 4.0,
            name
        );
    }
    out.push_str("</svg>\n");
    out
}
